//! Grounding-sample construction: text2bbox, bbox2text, bbox2dom and
//! function2bbox samples, with duplicate-text disambiguation, block-local
//! box serialization and sequential packing under a token budget.

mod prompts;
mod region;

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use prompts::{declared_placeholders, render, template_regex, PromptError, PromptPool};
pub use region::{annotation_color, region_name, surround_pixels, AnnotationColor, REGION_NAMES};

use crate::geometry::{
    denormalize_coord, from_block_local, normalize_coord, to_block_local, Axis, BlockGrid, BlockLocalPoint,
    GeometryError, PixelBox, PixelPoint, ResizeMap, DEFAULT_BLOCK,
};
use crate::snapshot::{
    hit_test_index, is_clickable, keep_set, select_dom_region, serialize_dom, DomIndex, MarkSet, NodeId, Snapshot,
    SnapshotError,
};
use crate::Diagnostic;

/// Default per-sample budget in estimated tokens.
pub const DEFAULT_TOKEN_BUDGET: usize = 4096;
/// Fixed cost added for every line of text.
pub const LINE_OVERHEAD: usize = 2;
/// First line of every image-conditioned prompt.
pub const IMAGE_TAG: &str = "<image>";

/// Tokenizer-free token estimate: `⌈chars/4⌉ + 2` per line, summed.
///
/// Additive over lines, so the cost of a sample is the sum of the costs of
/// its lines.
pub fn estimate_tokens(text: &str) -> usize {
    if text.is_empty() {
        return 0;
    }
    text.split('\n')
        .map(|l| l.chars().count().div_ceil(4) + LINE_OVERHEAD)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Text2Bbox,
    Bbox2Text,
    Bbox2Dom,
    Function2Bbox,
    Navigation,
}

impl Task {
    pub const ALL: [Task; 5] = [
        Task::Text2Bbox,
        Task::Bbox2Text,
        Task::Bbox2Dom,
        Task::Function2Bbox,
        Task::Navigation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Text2Bbox => "text2bbox",
            Task::Bbox2Text => "bbox2text",
            Task::Bbox2Dom => "bbox2dom",
            Task::Function2Bbox => "function2bbox",
            Task::Navigation => "navigation",
        }
    }

    /// Tasks whose samples are numbered lists of packed pairs.
    pub fn is_list(self) -> bool {
        matches!(self, Task::Text2Bbox | Task::Bbox2Text | Task::Function2Bbox)
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

mod grid_pair {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(g: &BlockGrid, s: S) -> Result<S::Ok, S::Error> {
        [g.n_w, g.n_h].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BlockGrid, D::Error> {
        let [n_w, n_h] = <[u32; 2]>::deserialize(d)?;
        BlockGrid::new(n_w, n_h, DEFAULT_BLOCK, DEFAULT_BLOCK).map_err(serde::de::Error::custom)
    }
}

/// One serialized prompt/target pair. Written as one JSON object per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub task: Task,
    pub prompt: String,
    pub target: String,
    pub snapshot_id: String,
    #[serde(with = "grid_pair")]
    pub grid: BlockGrid,
    pub est_tokens: usize,
}

impl TrainingSample {
    pub fn new(task: Task, prompt: String, target: String, snapshot_id: &str, grid: BlockGrid) -> Self {
        let est_tokens = estimate_tokens(&prompt) + estimate_tokens(&target);
        Self {
            task,
            prompt,
            target,
            snapshot_id: snapshot_id.to_string(),
            grid,
            est_tokens,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    Text,
    Icon,
    Function,
}

/// A piece of text tied to an on-screen box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundingPair {
    pub text: String,
    /// Box in source (viewport) pixels.
    pub bbox: PixelBox,
    /// Box center under the sample's grid; present for text and icon pairs.
    pub block_local: Option<BlockLocalPoint>,
    pub kind: PairKind,
    /// Source node, used to find disambiguating context.
    pub node: Option<NodeId>,
}

impl GroundingPair {
    pub fn new(text: String, bbox: PixelBox, kind: PairKind, node: Option<NodeId>, map: &ResizeMap) -> Self {
        let block_local = match kind {
            PairKind::Function => None,
            PairKind::Text | PairKind::Icon => to_block_local(map.point_to_grid(bbox.center()), &map.grid).ok(),
        };
        Self {
            text,
            bbox,
            block_local,
            kind,
            node,
        }
    }

    /// The box as written in samples.
    pub fn serialized_box(&self, map: &ResizeMap) -> Result<String, GeometryError> {
        serialize_bbox(&map.box_to_grid(self.bbox), &map.grid, self.block_local.is_some())
    }
}

/// Writes a box in resized-image pixels as normalized integers.
///
/// With a block index: `[block, cx', cy', w, h]`, center normalized within
/// its block and extent within the whole image. Without: `[cx, cy, w, h]`
/// normalized within the whole image.
pub fn serialize_bbox(b: &PixelBox, grid: &BlockGrid, with_block_index: bool) -> Result<String, GeometryError> {
    let extent = grid.extent();
    let local = to_block_local(b.center(), grid)?;
    if b.w > extent.w {
        return Err(GeometryError::OutOfBounds {
            axis: Axis::X,
            value: b.w,
            limit: extent.w + 1,
        });
    }
    if b.h > extent.h {
        return Err(GeometryError::OutOfBounds {
            axis: Axis::Y,
            value: b.h,
            limit: extent.h + 1,
        });
    }
    let w = normalize_coord(b.w, extent.w);
    let h = normalize_coord(b.h, extent.h);
    Ok(if with_block_index {
        format!(
            "[{}, {}, {}, {}, {}]",
            local.block,
            normalize_coord(local.x, grid.block_w),
            normalize_coord(local.y, grid.block_h),
            w,
            h
        )
    } else {
        format!(
            "[{}, {}, {}, {}]",
            normalize_coord(b.cx, extent.w),
            normalize_coord(b.cy, extent.h),
            w,
            h
        )
    })
}

/// Parses `[a, b, c, ...]` into integers.
pub fn parse_bbox(s: &str) -> Option<Vec<u32>> {
    let inner = s.trim().strip_prefix('[')?.strip_suffix(']')?;
    inner.split(',').map(|v| v.trim().parse().ok()).collect()
}

/// Recovers a resized-image box from its block-indexed serialization.
pub fn decode_block_bbox(values: &[u32], grid: &BlockGrid) -> Option<PixelBox> {
    let [block, nx, ny, nw, nh] = values else { return None };
    let local = BlockLocalPoint::new(
        *block,
        denormalize_coord(*nx, grid.block_w).min(grid.block_w - 1),
        denormalize_coord(*ny, grid.block_h).min(grid.block_h - 1),
    );
    let c = from_block_local(local, grid).ok()?;
    let e = grid.extent();
    Some(PixelBox::new(
        c.x,
        c.y,
        denormalize_coord(*nw, e.w),
        denormalize_coord(*nh, e.h),
    ))
}

/// Recovers a resized-image box from its global serialization.
pub fn decode_global_bbox(values: &[u32], grid: &BlockGrid) -> Option<PixelBox> {
    let [cx, cy, w, h] = values else { return None };
    let e = grid.extent();
    Some(PixelBox::new(
        denormalize_coord(*cx, e.w).min(e.w - 1),
        denormalize_coord(*cy, e.h).min(e.h - 1),
        denormalize_coord(*w, e.w),
        denormalize_coord(*h, e.h),
    ))
}

/// Looks up disambiguating context inside a DOM, optionally restricted to
/// the nodes that survive pruning.
struct ContextFinder<'a> {
    index: DomIndex<'a>,
    keep: Option<BTreeSet<NodeId>>,
}

impl<'a> ContextFinder<'a> {
    fn new(snapshot: &'a Snapshot, marks: Option<&MarkSet>) -> Self {
        let index = snapshot.index();
        let keep = marks.map(|m| keep_set(&index, m));
        Self { index, keep }
    }

    fn kept(&self, id: NodeId) -> bool {
        self.keep.as_ref().is_none_or(|k| k.contains(&id))
    }

    fn text_of(&self, id: NodeId, own: &str) -> Option<String> {
        self.index.node(id).clean_text().filter(|t| t != own)
    }

    /// Nearest ancestor text, else nearest preceding sibling text. Anchors
    /// found by hit-testing (for pairs without a node) contribute their own
    /// text first.
    fn context(&self, pair: &GroundingPair) -> Option<String> {
        let (start, include_self) = match pair.node {
            Some(id) if id.0 < self.index.len() => (id, false),
            _ => (hit_test_index(&self.index, pair.bbox.center())?, true),
        };
        if include_self {
            if let Some(t) = self.text_of(start, &pair.text) {
                return Some(t);
            }
        }
        for a in self.index.ancestors(start) {
            if let Some(t) = self.text_of(a, &pair.text) {
                return Some(t);
            }
        }
        self.index
            .preceding_siblings(start)
            .into_iter()
            .filter(|&s| self.kept(s))
            .find_map(|s| self.text_of(s, &pair.text))
    }

    /// Short list of texts around a node, for function description prompts.
    fn neighborhood(&self, id: NodeId, own: &str, limit: usize) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let push = |t: Option<String>, out: &mut Vec<String>| {
            if let Some(t) = t {
                if !out.contains(&t) && out.len() < limit {
                    out.push(t);
                }
            }
        };
        if let Some(p) = self.index.ancestors(id).find(|&a| self.text_of(a, own).is_some()) {
            push(self.text_of(p, own), &mut out);
        }
        let before = self.index.preceding_siblings(id);
        let after = self.index.following_siblings(id);
        for i in 0..before.len().max(after.len()) {
            if let Some(&s) = before.get(i) {
                push(self.text_of(s, own), &mut out);
            }
            if let Some(&s) = after.get(i) {
                push(self.text_of(s, own), &mut out);
            }
        }
        for &c in self.index.children(id) {
            push(self.text_of(c, own), &mut out);
        }
        out
    }
}

/// Texts around `node` (nearest ancestor, then siblings outward, then
/// children), at most `limit` of them.
pub fn context_texts(snapshot: &Snapshot, node: NodeId, limit: usize) -> Vec<String> {
    let finder = ContextFinder::new(snapshot, None);
    let own = finder.index.node(node).clean_text().unwrap_or_default();
    finder.neighborhood(node, &own, limit)
}

/// Rewrites texts that occur more than once as `"{text} (near: {context})"`.
///
/// Duplicates without any context, or whose rewritten text still collides
/// with an earlier pair, are dropped with a diagnostic. When `marks` is
/// given, sibling context is limited to nodes kept by pruning.
pub fn disambiguate(
    pairs: Vec<GroundingPair>,
    snapshot: &Snapshot,
    marks: Option<&MarkSet>,
    diags: &mut Vec<Diagnostic>,
) -> Vec<GroundingPair> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for p in &pairs {
        *counts.entry(p.text.as_str()).or_default() += 1;
    }
    let duplicated: BTreeSet<String> = counts
        .into_iter()
        .filter(|&(_, n)| n > 1)
        .map(|(t, _)| t.to_string())
        .collect();
    if duplicated.is_empty() {
        return pairs;
    }
    let finder = ContextFinder::new(snapshot, marks);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(pairs.len());
    for mut pair in pairs {
        if duplicated.contains(&pair.text) {
            match finder.context(&pair) {
                Some(ctx) => pair.text = format!("{} (near: {ctx})", pair.text),
                None => {
                    diags.push(Diagnostic::new(
                        "no_context",
                        format!("{}: dropped duplicate {:?} without context", snapshot.id, pair.text),
                    ));
                    continue;
                }
            }
        }
        if !seen.insert(pair.text.clone()) {
            diags.push(Diagnostic::new(
                "ambiguous_context",
                format!(
                    "{}: dropped {:?}, context does not disambiguate",
                    snapshot.id, pair.text
                ),
            ));
            continue;
        }
        out.push(pair);
    }
    out
}

/// Sequential packing plan: item indices per sample, plus items too large
/// to fit even alone.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Packing {
    pub bins: Vec<Vec<usize>>,
    pub dropped: Vec<usize>,
}

/// Greedy sequential packing. `cost(item, position)` is the cost of placing
/// `item` as the `position`-th (1-based) entry of a sample. Items are taken
/// in order; a new sample starts whenever the next item does not fit in the
/// open one, so input order is preserved within and across samples.
pub fn pack_sequential<F>(n: usize, budget: usize, overhead: usize, cost: F) -> Packing
where
    F: Fn(usize, usize) -> usize,
{
    let mut packing = Packing::default();
    let mut open: Vec<usize> = Vec::new();
    let mut used = overhead;
    for item in 0..n {
        if overhead + cost(item, 1) > budget {
            packing.dropped.push(item);
            continue;
        }
        if !open.is_empty() && used + cost(item, open.len() + 1) > budget {
            packing.bins.push(std::mem::take(&mut open));
            used = overhead;
        }
        let c = cost(item, open.len() + 1);
        open.push(item);
        used += c;
    }
    if !open.is_empty() {
        packing.bins.push(open);
    }
    packing
}

/// [`pack_sequential`] with position-independent costs.
pub fn pack_costs(costs: &[usize], budget: usize, overhead: usize) -> Packing {
    pack_sequential(costs.len(), budget, overhead, |i, _| costs[i])
}

/// Everything a list sample needs besides its pairs.
pub struct SampleContext<'a> {
    pub snapshot_id: &'a str,
    pub map: ResizeMap,
    pub pool: &'a PromptPool,
}

fn numbered(i: usize, s: &str) -> String {
    format!("{i}.{s}")
}

/// Packs pairs into numbered list samples of `task` under `budget`.
pub fn pack_pairs<R: Rng + ?Sized>(
    pairs: &[GroundingPair],
    task: Task,
    ctx: &SampleContext<'_>,
    budget: usize,
    rng: &mut R,
    diags: &mut Vec<Diagnostic>,
) -> Vec<TrainingSample> {
    debug_assert!(task.is_list());
    let mut lines: Vec<(String, String)> = Vec::with_capacity(pairs.len());
    let mut usable: Vec<&GroundingPair> = Vec::with_capacity(pairs.len());
    for p in pairs {
        match p.serialized_box(&ctx.map) {
            Ok(b) => {
                usable.push(p);
                lines.push(match task {
                    Task::Bbox2Text => (b, p.text.clone()),
                    _ => (p.text.clone(), b),
                });
            }
            Err(e) => diags.push(Diagnostic::new(
                "bbox_out_of_bounds",
                format!("{}: {e}", ctx.snapshot_id),
            )),
        }
    }
    let instruction_cost = ctx
        .pool
        .templates(task)
        .iter()
        .map(|t| estimate_tokens(t))
        .max()
        .unwrap_or(0);
    let overhead = estimate_tokens(IMAGE_TAG) + instruction_cost;
    let cost = |i: usize, pos: usize| {
        estimate_tokens(&numbered(pos, &lines[i].0)) + estimate_tokens(&numbered(pos, &lines[i].1))
    };
    let packing = pack_sequential(lines.len(), budget, overhead, cost);
    for &i in &packing.dropped {
        diags.push(Diagnostic::new(
            "pair_over_budget",
            format!(
                "{}: {task} pair {:?} exceeds budget {budget} alone",
                ctx.snapshot_id, usable[i].text
            ),
        ));
    }
    packing
        .bins
        .iter()
        .map(|bin| {
            let instruction = ctx.pool.choose(task, rng);
            let mut prompt = vec![IMAGE_TAG.to_string()];
            let mut target = Vec::with_capacity(bin.len());
            for (pos, &i) in bin.iter().enumerate() {
                prompt.push(numbered(pos + 1, &lines[i].0));
                target.push(numbered(pos + 1, &lines[i].1));
            }
            prompt.push(instruction.to_string());
            TrainingSample::new(
                task,
                prompt.join("\n"),
                target.join("\n"),
                ctx.snapshot_id,
                ctx.map.grid,
            )
        })
        .collect()
}

/// Text and icon pairs for the marked elements of a snapshot: marked nodes
/// with visible text in document order, then in-bounds icons.
pub fn grounding_pairs(snapshot: &Snapshot, marks: &MarkSet, map: &ResizeMap) -> Vec<GroundingPair> {
    let index = snapshot.index();
    let viewport = snapshot.viewport();
    let mut pairs = Vec::new();
    for &id in marks {
        let Some(entry) = index.get(id) else { continue };
        if let Some(text) = entry.node.clean_text() {
            if viewport.contains(entry.node.bbox.center()) {
                pairs.push(GroundingPair::new(text, entry.node.bbox, PairKind::Text, Some(id), map));
            }
        }
    }
    for icon in &snapshot.icons {
        let Some(caption) = crate::snapshot::collapse_ws(&icon.caption) else {
            continue;
        };
        if icon.bbox.within(viewport) && viewport.contains(icon.bbox.center()) {
            pairs.push(GroundingPair::new(caption, icon.bbox, PairKind::Icon, None, map));
        }
    }
    pairs
}

#[allow(clippy::too_many_arguments)]
fn gen_grounding<R: Rng + ?Sized>(
    task: Task,
    snapshot: &Snapshot,
    marks: &MarkSet,
    pool: &PromptPool,
    map: &ResizeMap,
    budget: usize,
    rng: &mut R,
    diags: &mut Vec<Diagnostic>,
) -> Vec<TrainingSample> {
    let pairs = grounding_pairs(snapshot, marks, map);
    if pairs.is_empty() {
        return Vec::new();
    }
    let pairs = disambiguate(pairs, snapshot, Some(marks), diags);
    let ctx = SampleContext {
        snapshot_id: &snapshot.id,
        map: *map,
        pool,
    };
    pack_pairs(&pairs, task, &ctx, budget, rng, diags)
}

pub fn gen_text2bbox<R: Rng + ?Sized>(
    snapshot: &Snapshot,
    marks: &MarkSet,
    pool: &PromptPool,
    map: &ResizeMap,
    budget: usize,
    rng: &mut R,
    diags: &mut Vec<Diagnostic>,
) -> Vec<TrainingSample> {
    gen_grounding(Task::Text2Bbox, snapshot, marks, pool, map, budget, rng, diags)
}

pub fn gen_bbox2text<R: Rng + ?Sized>(
    snapshot: &Snapshot,
    marks: &MarkSet,
    pool: &PromptPool,
    map: &ResizeMap,
    budget: usize,
    rng: &mut R,
    diags: &mut Vec<Diagnostic>,
) -> Vec<TrainingSample> {
    gen_grounding(Task::Bbox2Text, snapshot, marks, pool, map, budget, rng, diags)
}

/// Widest region string, used to reserve prompt room before the region is
/// known.
const WIDEST_REGION: &str = "[999, 999, 999, 999]";

/// A bbox2dom sample for the pruned-DOM region holding the most marked
/// elements within the budget.
pub fn gen_bbox2dom<R: Rng + ?Sized>(
    snapshot: &Snapshot,
    marks: &MarkSet,
    pool: &PromptPool,
    map: &ResizeMap,
    budget: usize,
    rng: &mut R,
) -> Result<TrainingSample, SnapshotError> {
    let template = pool.choose(Task::Bbox2Dom, rng);
    let reserve = estimate_tokens(IMAGE_TAG) + estimate_tokens(&render(template, &[("region", WIDEST_REGION)]));
    let region_budget = budget
        .checked_sub(reserve)
        .filter(|&b| b > 0)
        .ok_or(SnapshotError::RegionBudgetTooSmall)?;
    let (bbox, subtree) = select_dom_region(snapshot, marks, region_budget)?;
    let region =
        serialize_bbox(&map.box_to_grid(bbox), &map.grid, false).map_err(|_| SnapshotError::RegionBudgetTooSmall)?;
    let prompt = format!("{IMAGE_TAG}\n{}", render(template, &[("region", &region)]));
    Ok(TrainingSample::new(
        Task::Bbox2Dom,
        prompt,
        serialize_dom(&subtree),
        &snapshot.id,
        map.grid,
    ))
}

/// What a function description points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionTarget {
    Node(NodeId),
    /// A box with no DOM node behind it (e.g. a recorded mobile click target).
    Box(PixelBox),
}

/// function2bbox samples; boxes use global normalized coordinates without
/// a block index.
pub fn gen_function2bbox<R: Rng + ?Sized>(
    snapshot: &Snapshot,
    functions: &[(FunctionTarget, String)],
    pool: &PromptPool,
    map: &ResizeMap,
    budget: usize,
    rng: &mut R,
    diags: &mut Vec<Diagnostic>,
) -> Vec<TrainingSample> {
    let index = snapshot.index();
    let mut pairs = Vec::new();
    for (target, text) in functions {
        let Some(text) = crate::snapshot::collapse_ws(text) else {
            diags.push(Diagnostic::new(
                "empty_function",
                format!("{}: empty function text", snapshot.id),
            ));
            continue;
        };
        match *target {
            FunctionTarget::Node(id) => {
                let Some(entry) = index.get(id) else {
                    diags.push(Diagnostic::new(
                        "unknown_node",
                        format!("{}: no node {}", snapshot.id, id.0),
                    ));
                    continue;
                };
                if !is_clickable(entry.node) {
                    diags.push(Diagnostic::new(
                        "not_clickable",
                        format!("{}: node {} <{}> is not clickable", snapshot.id, id.0, entry.node.tag),
                    ));
                    continue;
                }
                pairs.push(GroundingPair::new(
                    text,
                    entry.node.bbox,
                    PairKind::Function,
                    Some(id),
                    map,
                ));
            }
            FunctionTarget::Box(b) => pairs.push(GroundingPair::new(text, b, PairKind::Function, None, map)),
        }
    }
    if pairs.is_empty() {
        return Vec::new();
    }
    let pairs = disambiguate(pairs, snapshot, None, diags);
    let ctx = SampleContext {
        snapshot_id: &snapshot.id,
        map: *map,
        pool,
    };
    pack_pairs(&pairs, Task::Function2Bbox, &ctx, budget, rng, diags)
}

/// Splits a list-task sample back into its prompt and target items and the
/// trailing instruction.
pub fn split_list_sample(sample: &TrainingSample) -> Option<(Vec<String>, Vec<String>, String)> {
    let mut prompt_lines: Vec<&str> = sample.prompt.split('\n').collect();
    if prompt_lines.first() != Some(&IMAGE_TAG) || prompt_lines.len() < 2 {
        return None;
    }
    let instruction = prompt_lines.pop()?.to_string();
    let strip = |i: usize, l: &str| l.strip_prefix(&format!("{}.", i + 1)).map(str::to_string);
    let items: Option<Vec<String>> = prompt_lines[1..].iter().enumerate().map(|(i, l)| strip(i, l)).collect();
    let targets: Option<Vec<String>> = sample
        .target
        .split('\n')
        .enumerate()
        .map(|(i, l)| strip(i, l))
        .collect();
    let (items, targets) = (items?, targets?);
    (items.len() == targets.len()).then_some((items, targets, instruction))
}

/// Re-packs already rendered list samples under a new budget, keeping item
/// order and the instruction of the first sample in each group.
pub fn repack_list_samples(
    samples: &[TrainingSample],
    budget: usize,
    diags: &mut Vec<Diagnostic>,
) -> Vec<TrainingSample> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < samples.len() {
        let first = &samples[i];
        let mut j = i;
        let mut items: Vec<(String, String)> = Vec::new();
        let mut instruction = None;
        while j < samples.len()
            && samples[j].task == first.task
            && samples[j].snapshot_id == first.snapshot_id
            && samples[j].grid == first.grid
        {
            match split_list_sample(&samples[j]) {
                Some((p, t, ins)) => {
                    instruction.get_or_insert(ins);
                    items.extend(p.into_iter().zip(t));
                }
                None => diags.push(Diagnostic::new(
                    "unparseable_sample",
                    format!(
                        "{}: {} sample is not a numbered list",
                        samples[j].snapshot_id, samples[j].task
                    ),
                )),
            }
            j += 1;
        }
        if let Some(instruction) = instruction {
            let overhead = estimate_tokens(IMAGE_TAG) + estimate_tokens(&instruction);
            let cost = |k: usize, pos: usize| {
                estimate_tokens(&numbered(pos, &items[k].0)) + estimate_tokens(&numbered(pos, &items[k].1))
            };
            let packing = pack_sequential(items.len(), budget, overhead, cost);
            for &k in &packing.dropped {
                diags.push(Diagnostic::new(
                    "pair_over_budget",
                    format!(
                        "{}: {} item {:?} exceeds budget {budget}",
                        first.snapshot_id, first.task, items[k].0
                    ),
                ));
            }
            for bin in packing.bins {
                let mut prompt = vec![IMAGE_TAG.to_string()];
                let mut target = Vec::new();
                for (pos, &k) in bin.iter().enumerate() {
                    prompt.push(numbered(pos + 1, &items[k].0));
                    target.push(numbered(pos + 1, &items[k].1));
                }
                prompt.push(instruction.clone());
                out.push(TrainingSample::new(
                    first.task,
                    prompt.join("\n"),
                    target.join("\n"),
                    &first.snapshot_id,
                    first.grid,
                ));
            }
        }
        i = j;
    }
    out
}

/// Center of `b` (source pixels) under the resized geometry; convenience for
/// checks that compare decoded boxes against their source elements.
pub fn grid_center(map: &ResizeMap, b: &PixelBox) -> PixelPoint {
    map.point_to_grid(b.center())
}
