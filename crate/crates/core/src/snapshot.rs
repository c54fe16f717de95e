//! Captured page model and the collection-side algorithms that run on it.
//!
//! Nodes are identified by their pre-order position in the captured tree
//! ([`NodeId`]). A [`DomIndex`] flattens a tree once so that parent links,
//! depths and document order are available without re-walking it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Extent, PixelBox, PixelPoint};
use crate::samplegen::estimate_tokens;

/// Nodes narrower or shorter than this are never marked.
pub const MIN_MARK_SIZE: u32 = 4;
/// Default grid sampling step in pixels.
pub const DEFAULT_GRID_STEP: u32 = 8;

/// Attributes kept on serialized DOM lines, in output order.
pub const ATTR_WHITELIST: [&str; 8] = [
    "id",
    "class",
    "href",
    "alt",
    "aria-label",
    "placeholder",
    "type",
    "role",
];

/// Tags treated as interactive even without a pointer cursor or handler.
pub const INTERACTIVE_TAGS: [&str; 8] = [
    "a", "button", "input", "select", "textarea", "option", "summary", "label",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomNode {
    pub tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub bbox: PixelBox,
    pub visible: bool,
    #[serde(default)]
    pub cursor_pointer: bool,
    #[serde(default)]
    pub has_event_listener: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attrs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<DomNode>,
}

impl DomNode {
    pub fn new(tag: impl Into<String>, bbox: PixelBox) -> Self {
        Self {
            tag: tag.into(),
            text: None,
            bbox,
            visible: true,
            cursor_pointer: false,
            has_event_listener: false,
            attrs: BTreeMap::new(),
            children: Vec::new(),
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }

    pub fn with_children(mut self, children: Vec<DomNode>) -> Self {
        self.children = children;
        self
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attrs.insert(key.into(), value.into());
        self
    }

    /// Visible text with internal whitespace collapsed; `None` when blank.
    pub fn clean_text(&self) -> Option<String> {
        self.text.as_deref().and_then(collapse_ws)
    }

    pub fn count(&self) -> usize {
        1 + self.children.iter().map(DomNode::count).sum::<usize>()
    }
}

pub(crate) fn collapse_ws(s: &str) -> Option<String> {
    let joined = s.split_whitespace().collect::<Vec<_>>().join(" ");
    (!joined.is_empty()).then_some(joined)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(PixelBox, String)", into = "(PixelBox, String)")]
pub struct Icon {
    pub bbox: PixelBox,
    pub caption: String,
}

impl From<(PixelBox, String)> for Icon {
    fn from((bbox, caption): (PixelBox, String)) -> Self {
        Self { bbox, caption }
    }
}

impl From<Icon> for (PixelBox, String) {
    fn from(i: Icon) -> Self {
        (i.bbox, i.caption)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: String,
    pub source_url: String,
    pub viewport_w: u32,
    pub viewport_h: u32,
    pub screenshot_ref: String,
    pub language: String,
    pub dom: DomNode,
    #[serde(default)]
    pub icons: Vec<Icon>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SnapshotError {
    #[error("region budget too small")]
    RegionBudgetTooSmall,
}

/// A schema-level problem found by [`Snapshot::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SchemaIssue {
    pub path: String,
    pub message: String,
}

impl Snapshot {
    pub fn viewport(&self) -> Extent {
        Extent::new(self.viewport_w, self.viewport_h)
    }

    pub fn index(&self) -> DomIndex<'_> {
        DomIndex::new(&self.dom)
    }

    /// Checks the invariants the JSON schema alone cannot express.
    pub fn validate(&self) -> Vec<SchemaIssue> {
        let mut issues = Vec::new();
        let mut issue = |path: String, message: String| issues.push(SchemaIssue { path, message });
        if self.id.trim().is_empty() {
            issue("id".into(), "empty id".into());
        }
        if self.viewport_w == 0 || self.viewport_h == 0 {
            issue(
                "viewport".into(),
                format!("non-positive viewport {}x{}", self.viewport_w, self.viewport_h),
            );
            return issues;
        }
        let viewport = self.viewport();
        let index = self.index();
        for (id, entry) in index.iter() {
            let b = entry.node.bbox;
            if b.w == 0 || b.h == 0 {
                issue(
                    format!("dom[{}]", id.0),
                    format!("degenerate bbox {:?}", <[u32; 4]>::from(b)),
                );
            } else if entry.node.visible && !b.intersects(viewport) {
                issue(format!("dom[{}]", id.0), "visible node outside viewport".into());
            }
            if entry.node.tag.trim().is_empty() {
                issue(format!("dom[{}]", id.0), "empty tag".into());
            }
        }
        for (i, icon) in self.icons.iter().enumerate() {
            if icon.bbox.w == 0 || icon.bbox.h == 0 || !icon.bbox.within(viewport) {
                issue(format!("icons[{i}]"), "icon box out of bounds".into());
            }
        }
        issues
    }
}

/// Pre-order position of a node in its tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

pub type MarkSet = BTreeSet<NodeId>;

#[derive(Debug, Clone, Copy)]
pub struct IndexedNode<'a> {
    pub node: &'a DomNode,
    pub parent: Option<NodeId>,
    pub depth: usize,
}

/// Flattened, pre-order view of a DOM tree.
#[derive(Debug, Clone)]
pub struct DomIndex<'a> {
    entries: Vec<IndexedNode<'a>>,
    children: Vec<Vec<NodeId>>,
    ends: Vec<usize>,
}

impl<'a> DomIndex<'a> {
    pub fn new(root: &'a DomNode) -> Self {
        let mut entries = Vec::new();
        let mut children = Vec::new();
        // (node, parent, depth)
        let mut stack = vec![(root, None::<NodeId>, 0usize)];
        while let Some((node, parent, depth)) = stack.pop() {
            let id = NodeId(entries.len());
            entries.push(IndexedNode { node, parent, depth });
            children.push(Vec::new());
            if let Some(p) = parent {
                children[p.0].push(id);
            }
            for child in node.children.iter().rev() {
                stack.push((child, Some(id), depth + 1));
            }
        }
        let mut ends = vec![0; entries.len()];
        for i in (0..entries.len()).rev() {
            ends[i] = children[i].last().map_or(i + 1, |c| ends[c.0]);
        }
        Self {
            entries,
            children,
            ends,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: NodeId) -> Option<&IndexedNode<'a>> {
        self.entries.get(id.0)
    }

    pub fn node(&self, id: NodeId) -> &'a DomNode {
        self.entries[id.0].node
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.entries[id.0].parent
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.children[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &IndexedNode<'a>)> {
        self.entries.iter().enumerate().map(|(i, e)| (NodeId(i), e))
    }

    /// Strict ancestors, nearest first.
    pub fn ancestors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        std::iter::successors(self.parent(id), move |&p| self.parent(p))
    }

    /// One past the last pre-order id in `id`'s subtree.
    pub fn subtree_end(&self, id: NodeId) -> usize {
        self.ends[id.0]
    }

    /// Siblings preceding `id`, nearest first.
    pub fn preceding_siblings(&self, id: NodeId) -> Vec<NodeId> {
        match self.parent(id) {
            None => Vec::new(),
            Some(p) => {
                let sibs = self.children(p);
                let pos = sibs.iter().position(|&s| s == id).unwrap_or(0);
                sibs[..pos].iter().rev().copied().collect()
            }
        }
    }

    pub fn following_siblings(&self, id: NodeId) -> Vec<NodeId> {
        match self.parent(id) {
            None => Vec::new(),
            Some(p) => {
                let sibs = self.children(p);
                let pos = sibs.iter().position(|&s| s == id).unwrap_or(sibs.len());
                sibs[pos + 1..].to_vec()
            }
        }
    }
}

/// Row-major sample points `(i·step, j·step)` inside the viewport.
pub fn grid_sample(viewport_w: u32, viewport_h: u32, step: u32) -> Vec<PixelPoint> {
    let step = step.max(1) as usize;
    (0..viewport_h)
        .step_by(step)
        .flat_map(|y| (0..viewport_w).step_by(step).map(move |x| PixelPoint::new(x, y)))
        .collect()
}

fn markable(node: &DomNode) -> bool {
    node.visible && node.bbox.w >= MIN_MARK_SIZE && node.bbox.h >= MIN_MARK_SIZE
}

/// Deepest markable node containing `p`; equal depths resolve to the later
/// node in document order.
pub fn hit_test(snapshot: &Snapshot, p: PixelPoint) -> Option<NodeId> {
    hit_test_index(&snapshot.index(), p)
}

pub(crate) fn hit_test_index(index: &DomIndex<'_>, p: PixelPoint) -> Option<NodeId> {
    let mut best: Option<(usize, NodeId)> = None;
    for (id, entry) in index.iter() {
        if !markable(entry.node) || !entry.node.bbox.contains(p) {
            continue;
        }
        if best.is_none_or(|(depth, _)| entry.depth >= depth) {
            best = Some((entry.depth, id));
        }
    }
    best.map(|(_, id)| id)
}

/// Nodes hit by grid sampling at `step` px.
pub fn mark_elements(snapshot: &Snapshot, step: u32) -> MarkSet {
    let index = snapshot.index();
    let candidates: Vec<(NodeId, &IndexedNode<'_>)> = index.iter().filter(|(_, e)| markable(e.node)).collect();
    let mut marks = MarkSet::new();
    for p in grid_sample(snapshot.viewport_w, snapshot.viewport_h, step) {
        let mut best: Option<(usize, NodeId)> = None;
        for &(id, entry) in &candidates {
            if entry.node.bbox.contains(p) && best.is_none_or(|(depth, _)| entry.depth >= depth) {
                best = Some((entry.depth, id));
            }
        }
        if let Some((_, id)) = best {
            marks.insert(id);
        }
    }
    marks
}

/// Result of pruning: the new tree and where each kept node went.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pruned {
    pub root: DomNode,
    /// Original id → id in the pruned tree.
    pub id_map: BTreeMap<NodeId, NodeId>,
}

impl Pruned {
    /// Marks re-expressed in the pruned tree's ids.
    pub fn map_marks(&self, marks: &MarkSet) -> MarkSet {
        marks.iter().filter_map(|m| self.id_map.get(m).copied()).collect()
    }
}

/// Nodes that survive pruning: the marks, their ancestors and the root.
pub fn keep_set(index: &DomIndex<'_>, marks: &MarkSet) -> BTreeSet<NodeId> {
    let mut keep = BTreeSet::new();
    if !index.is_empty() {
        keep.insert(NodeId(0));
    }
    for &m in marks {
        if m.0 >= index.len() {
            continue;
        }
        if !keep.insert(m) {
            continue;
        }
        for a in index.ancestors(m) {
            if !keep.insert(a) {
                break;
            }
        }
    }
    keep
}

/// Keeps marked nodes and their ancestors, preserving order.
pub fn prune_dom(snapshot: &Snapshot, marks: &MarkSet) -> DomNode {
    prune_tree(&snapshot.dom, marks).root
}

pub fn prune_tree(root: &DomNode, marks: &MarkSet) -> Pruned {
    let index = DomIndex::new(root);
    let keep = keep_set(&index, marks);
    let mut id_map = BTreeMap::new();
    for (new, &old) in keep.iter().enumerate() {
        // Pre-order of a subset closed under ancestors is its pre-order in the
        // induced tree.
        id_map.insert(old, NodeId(new));
    }
    let root = rebuild(&index, NodeId(0), &keep);
    Pruned { root, id_map }
}

fn rebuild(index: &DomIndex<'_>, id: NodeId, keep: &BTreeSet<NodeId>) -> DomNode {
    let mut out = index.node(id).clone_shallow();
    out.children = index
        .children(id)
        .iter()
        .filter(|c| keep.contains(c))
        .map(|&c| rebuild(index, c, keep))
        .collect();
    out
}

impl DomNode {
    fn clone_shallow(&self) -> DomNode {
        DomNode {
            tag: self.tag.clone(),
            text: self.text.clone(),
            bbox: self.bbox,
            visible: self.visible,
            cursor_pointer: self.cursor_pointer,
            has_event_listener: self.has_event_listener,
            attrs: self.attrs.clone(),
            children: Vec::new(),
        }
    }
}

pub fn is_clickable(node: &DomNode) -> bool {
    node.cursor_pointer || node.has_event_listener || INTERACTIVE_TAGS.iter().any(|t| node.tag.eq_ignore_ascii_case(t))
}

fn escape_attr(v: &str) -> String {
    collapse_ws(v).unwrap_or_default().replace('"', "&quot;")
}

/// One line of the DOM serialization for `node` at `depth`.
pub fn dom_line(node: &DomNode, depth: usize) -> String {
    let mut line = "  ".repeat(depth);
    line.push('<');
    line.push_str(&node.tag.to_ascii_lowercase());
    for key in ATTR_WHITELIST {
        if let Some(v) = node.attrs.get(key) {
            line.push_str(&format!(" {key}=\"{}\"", escape_attr(v)));
        }
    }
    line.push('>');
    if let Some(text) = node.clean_text() {
        line.push(' ');
        line.push_str(&text);
    }
    line
}

/// Serializes a subtree: one node per line, two spaces of indent per level
/// below `root`, `<tag attr="v">` followed by the node's text.
pub fn serialize_dom(root: &DomNode) -> String {
    fn walk(node: &DomNode, depth: usize, out: &mut Vec<String>) {
        out.push(dom_line(node, depth));
        for c in &node.children {
            walk(c, depth + 1, out);
        }
    }
    let mut lines = Vec::new();
    walk(root, 0, &mut lines);
    lines.join("\n")
}

/// Picks the subtree of the pruned DOM that fits `token_budget` and holds
/// the most marked nodes. Ties go to the smaller box, then document order.
pub fn select_dom_region(
    snapshot: &Snapshot,
    marks: &MarkSet,
    token_budget: usize,
) -> Result<(PixelBox, DomNode), SnapshotError> {
    let pruned = prune_tree(&snapshot.dom, marks);
    let pmarks = pruned.map_marks(marks);
    let index = DomIndex::new(&pruned.root);

    let mut best: Option<(usize, u64, NodeId)> = None;
    for (id, entry) in index.iter() {
        let tokens = estimate_tokens(&serialize_dom(entry.node));
        if tokens > token_budget {
            continue;
        }
        let end = index.subtree_end(id);
        let count = pmarks.range(id..NodeId(end)).count();
        let area = entry.node.bbox.area();
        let better = match best {
            None => true,
            Some((bc, ba, _)) => count > bc || (count == bc && area < ba),
        };
        if better {
            best = Some((count, area, id));
        }
    }
    let (_, _, id) = best.ok_or(SnapshotError::RegionBudgetTooSmall)?;
    let node = index.node(id).clone();
    Ok((node.bbox, node))
}
