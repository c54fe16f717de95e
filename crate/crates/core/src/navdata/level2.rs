//! Function descriptions for clickable web elements: a vision model
//! describes what clicking an element does, a language model shortens the
//! answer to a `to ...` phrase.

use std::sync::OnceLock;

use image::RgbImage;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::client::{Capability, GenerationClient, GenerationRequest};
use crate::samplegen::{annotation_color, region_name, render, surround_pixels, AnnotationColor};
use crate::snapshot::{is_clickable, NodeId, Snapshot};

const DESCRIBE_TEMPLATE: &str = include_str!("../../assets/level2/describe.txt");
const REFINE_TEMPLATE: &str = include_str!("../../assets/level2/refine.txt");

/// Context texts passed to the describe prompt.
pub const CONTEXT_LIMIT: usize = 5;

fn trim_template(t: &str) -> &str {
    t.strip_suffix('\n').unwrap_or(t)
}

/// Renders strings the way a Python list prints: `['a', 'b']`.
pub fn python_list(items: &[String]) -> String {
    let quoted: Vec<String> = items
        .iter()
        .map(|s| format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'")))
        .collect();
    format!("[{}]", quoted.join(", "))
}

pub fn build_describe_prompt(text: &str, region: &str, context: &[String]) -> String {
    let context = python_list(context);
    render(
        trim_template(DESCRIBE_TEMPLATE),
        &[("text", text), ("region", region), ("context_text", context.as_str())],
    )
}

pub fn build_refine_prompt(purpose: &str) -> String {
    render(trim_template(REFINE_TEMPLATE), &[("purpose", purpose)])
}

fn purpose_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"The purpose is\s*"([^"\n]+)""#).expect("static regex"))
}

/// The last quoted purpose in a describe response.
pub fn extract_purpose(response: &str) -> Option<String> {
    purpose_re()
        .captures_iter(response)
        .last()
        .map(|c| c[1].trim().to_string())
        .filter(|p| !p.is_empty())
}

/// Cleans a refine response; `None` unless it is a phrase starting with
/// the word "to".
pub fn accept_refined(response: &str) -> Option<String> {
    let line = response.lines().map(str::trim).find(|l| !l.is_empty())?;
    let line = line
        .trim_matches(|c| c == '"' || c == '\'')
        .trim()
        .trim_end_matches('.')
        .trim();
    let starts = line.strip_prefix("to").is_some_and(|rest| rest.starts_with(' '));
    starts.then(|| line.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level2Failure {
    pub snapshot_id: String,
    pub node: usize,
    pub code: String,
    pub message: String,
}

/// Everything that goes into the describe request for one element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescribeInput {
    pub text: String,
    pub region: &'static str,
    pub context: Vec<String>,
    pub color: AnnotationColor,
}

/// Name shown for an element: its text, else its `aria-label` or `alt`.
pub fn element_label(snapshot: &Snapshot, node: NodeId) -> Option<String> {
    let index = snapshot.index();
    let n = index.node(node);
    n.clean_text().or_else(|| {
        ["aria-label", "alt", "placeholder"]
            .iter()
            .find_map(|k| n.attrs.get(*k).and_then(|v| crate::snapshot::collapse_ws(v)))
    })
}

pub fn describe_input(
    snapshot: &Snapshot,
    node: NodeId,
    screenshot: Option<&RgbImage>,
) -> Result<DescribeInput, (String, String)> {
    let index = snapshot.index();
    let Some(entry) = index.get(node) else {
        return Err(("unknown_node".into(), format!("no node {}", node.0)));
    };
    if !is_clickable(entry.node) {
        return Err(("not_clickable".into(), format!("<{}> is not clickable", entry.node.tag)));
    }
    let text = element_label(snapshot, node).ok_or(("no_text".into(), "element has no text or label".into()))?;
    let b = entry.node.bbox;
    let color = screenshot.map_or(AnnotationColor::Red, |img| annotation_color(&surround_pixels(img, &b)));
    Ok(DescribeInput {
        text,
        region: region_name(&b, snapshot.viewport()),
        context: crate::samplegen::context_texts(snapshot, node, CONTEXT_LIMIT),
        color,
    })
}

/// Generates a function phrase for a clickable element. A refine answer
/// that does not start with "to" is retried once before giving up.
pub fn run_level2_generation(
    snapshot: &Snapshot,
    node: NodeId,
    screenshot: Option<&RgbImage>,
    describe: &dyn GenerationClient,
    refine: &dyn GenerationClient,
) -> Result<String, Level2Failure> {
    let fail = |code: &str, message: String| Level2Failure {
        snapshot_id: snapshot.id.clone(),
        node: node.0,
        code: code.into(),
        message,
    };
    let input = describe_input(snapshot, node, screenshot).map_err(|(c, m)| fail(&c, m))?;
    let b = snapshot.index().node(node).bbox;
    let tag = format!("{}#{}", snapshot.id, node.0);

    let mut req = GenerationRequest::new(
        Capability::DescribeFunction,
        build_describe_prompt(&input.text, input.region, &input.context),
    );
    req.images.push(snapshot.screenshot_ref.clone());
    req.tag = tag.clone();
    req.metadata
        .insert("annotation_color".into(), input.color.as_str().into());
    req.metadata.insert(
        "annotation_box".into(),
        format!("[{}, {}, {}, {}]", b.cx, b.cy, b.w, b.h),
    );
    let response = describe
        .generate(&req)
        .map_err(|e| fail("client_failure", e.to_string()))?;
    let purpose = extract_purpose(&response)
        .ok_or_else(|| fail("no_purpose", format!("no quoted purpose in {:?}", truncate(&response))))?;

    let mut req = GenerationRequest::new(Capability::RefineFunction, build_refine_prompt(&purpose));
    req.tag = tag;
    let mut last = String::new();
    for attempt in 1..=2 {
        if attempt > 1 {
            req.metadata.insert("attempt".into(), attempt.to_string());
        }
        last = refine
            .generate(&req)
            .map_err(|e| fail("client_failure", e.to_string()))?;
        if let Some(phrase) = accept_refined(&last) {
            return Ok(phrase);
        }
    }
    Err(fail(
        "not_to_phrase",
        format!("refined text {:?} does not start with \"to\"", truncate(&last)),
    ))
}

fn truncate(s: &str) -> String {
    s.chars().take(120).collect()
}
