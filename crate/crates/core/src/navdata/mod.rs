//! Navigation data: judge prompts for trajectory cleaning, verdict parsing,
//! step filtering, chain-of-thought sample assembly, and function pairs
//! derived from cleaned mobile steps.

pub mod client;
pub mod level2;

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{parse_call, Action, ActionPos, ActionSpace, Arg};
use crate::geometry::{
    denormalize_coord, from_block_local, normalize_coord, to_block_local, BlockLocalPoint, Extent, GeometryError,
    PixelBox, PixelPoint, ResizeMap,
};
use crate::samplegen::{render, PromptPool};
use crate::samplegen::{Task, TrainingSample, IMAGE_TAG};

/// History entries shown in a navigation sample.
pub const MAX_HISTORY: usize = 5;

pub const JUDGE_SYSTEM_PROMPT: &str = include_str!("../../assets/judge/system.txt");
const MIDDLE_TEMPLATE: &str = include_str!("../../assets/judge/middle.txt");
const FINAL_TEMPLATE: &str = include_str!("../../assets/judge/final.txt");

const FUNCTION_MARKER: &str = "The function of the Current Action:";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NavError {
    #[error("step {0} is final; a middle-step prompt needs the next screenshot")]
    NotMiddle(String),
    #[error("step {0} is not final")]
    NotFinal(String),
    #[error("step {0} has no step description")]
    MissingDescription(String),
    #[error("step {0}: {1}")]
    Geometry(String, GeometryError),
    #[error("step {0}: action {1} is not in the action space")]
    ActionNotInSpace(String, String),
}

/// One step of a recorded trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub trajectory_id: String,
    pub task: String,
    /// Zero-based position in the trajectory.
    pub step_index: usize,
    pub screenshot_ref: String,
    /// Absent on the final step.
    #[serde(default)]
    pub next_screenshot_ref: Option<String>,
    pub gold_action: Action,
    /// Descriptions of the earlier steps, oldest first.
    #[serde(default)]
    pub history: Vec<String>,
    #[serde(default)]
    pub step_description: Option<String>,
    /// Box of the element the gold action targets, in screen pixels.
    #[serde(default)]
    pub gold_box: Option<PixelBox>,
    #[serde(default)]
    pub screen: Option<Extent>,
}

impl TrajectoryStep {
    pub fn is_final(&self) -> bool {
        self.next_screenshot_ref.is_none()
    }

    /// `trajectory_id:step_index`, used as a stable key.
    pub fn key(&self) -> String {
        format!("{}:{}", self.trajectory_id, self.step_index)
    }
}

/// Numbered history lines, `"[]"` when empty.
pub fn render_history(history: &[String]) -> String {
    if history.is_empty() {
        return "[]".to_string();
    }
    numbered_lines(history)
}

fn numbered_lines(items: &[String]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, h)| format!("{}. {h}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

fn template(t: &str) -> &str {
    t.strip_suffix('\n').unwrap_or(t)
}

pub fn build_middle_prompt(step: &TrajectoryStep) -> Result<String, NavError> {
    if step.is_final() {
        return Err(NavError::NotMiddle(step.key()));
    }
    let history = render_history(&step.history);
    let action = step.gold_action.to_code();
    let idx = (step.step_index + 1).to_string();
    Ok(render(
        template(MIDDLE_TEMPLATE),
        &[
            ("task", step.task.as_str()),
            ("history", history.as_str()),
            ("action", action.as_str()),
            ("step_idx", idx.as_str()),
        ],
    ))
}

/// The final step's own action is appended to the history, since the
/// final template has no separate slot for it.
pub fn build_final_prompt(step: &TrajectoryStep) -> Result<String, NavError> {
    if !step.is_final() {
        return Err(NavError::NotFinal(step.key()));
    }
    let mut history = step.history.clone();
    history.push(step.gold_action.to_code());
    let history = render_history(&history);
    Ok(render(
        template(FINAL_TEMPLATE),
        &[("task", step.task.as_str()), ("history", history.as_str())],
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Middle,
    Final,
}

impl StepKind {
    pub fn of(step: &TrajectoryStep) -> Self {
        if step.is_final() {
            StepKind::Final
        } else {
            StepKind::Middle
        }
    }
}

/// A judge's answer about one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub summary: String,
    pub step_function: Option<String>,
    pub rationality_reason: Option<String>,
    /// Set on middle steps.
    pub rational: Option<bool>,
    pub completion_reason: Option<String>,
    /// Mandatory on final steps, optional on middle ones.
    pub complete: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerdictError {
    #[error("item {0} missing")]
    MissingItem(usize),
    #[error("item {0} has no True/False answer")]
    NoBoolean(usize),
    #[error("item {0} contains both True and False")]
    AmbiguousBoolean(usize),
    #[error("no line starting with \"{FUNCTION_MARKER}\"")]
    MissingFunction,
}

impl VerdictError {
    pub fn code(&self) -> &'static str {
        match self {
            VerdictError::MissingItem(_) => "missing_item",
            VerdictError::NoBoolean(_) => "no_boolean",
            VerdictError::AmbiguousBoolean(_) => "ambiguous_boolean",
            VerdictError::MissingFunction => "missing_function",
        }
    }
}

fn item_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:\*\*)?(\d+)[.)](?:\*\*)?\s*(.*)$").expect("static regex"))
}

fn bool_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(true|false)\b").expect("static regex"))
}

/// Splits a numbered response into items; continuation lines join the item
/// above them. Later duplicates of a number are ignored.
fn numbered_items(response: &str) -> Vec<(usize, String)> {
    let mut items: Vec<(usize, String)> = Vec::new();
    let mut current: Option<(usize, Vec<String>)> = None;
    for line in response.lines() {
        if let Some(cap) = item_re().captures(line) {
            if let Ok(n) = cap[1].parse::<usize>() {
                if let Some((k, lines)) = current.take() {
                    items.push((k, lines.join("\n").trim().to_string()));
                }
                current = Some((n, vec![cap[2].to_string()]));
                continue;
            }
        }
        if let Some((_, lines)) = current.as_mut() {
            lines.push(line.to_string());
        }
    }
    if let Some((k, lines)) = current {
        items.push((k, lines.join("\n").trim().to_string()));
    }
    let mut seen = std::collections::HashSet::new();
    items.retain(|(k, _)| seen.insert(*k));
    items
}

fn item(items: &[(usize, String)], n: usize) -> Option<&str> {
    items.iter().find(|(k, _)| *k == n).map(|(_, t)| t.as_str())
}

fn parse_bool(text: &str, n: usize) -> Result<bool, VerdictError> {
    let mut found = None;
    for cap in bool_re().captures_iter(text) {
        let v = cap[1].eq_ignore_ascii_case("true");
        match found {
            Some(prev) if prev != v => return Err(VerdictError::AmbiguousBoolean(n)),
            _ => found = Some(v),
        }
    }
    found.ok_or(VerdictError::NoBoolean(n))
}

fn step_function(items: &[(usize, String)], response: &str) -> Option<String> {
    let from = |text: &str| {
        text.lines().find_map(|l| {
            let at = l.find(FUNCTION_MARKER)?;
            let rest = l[at + FUNCTION_MARKER.len()..].trim();
            let rest = rest.trim_matches('"').trim();
            (!rest.is_empty()).then(|| rest.to_string())
        })
    };
    item(items, 2).and_then(from).or_else(|| from(response))
}

fn nonempty(s: Option<&str>) -> Option<String> {
    s.filter(|t| !t.is_empty()).map(str::to_string)
}

pub fn parse_verdict(response: &str, kind: StepKind) -> Result<JudgeVerdict, VerdictError> {
    let items = numbered_items(response);
    let summary = item(&items, 1).unwrap_or_default().to_string();
    match kind {
        StepKind::Middle => {
            let rational_text = item(&items, 4).ok_or(VerdictError::MissingItem(4))?;
            let rational = parse_bool(rational_text, 4)?;
            let function = step_function(&items, response).ok_or(VerdictError::MissingFunction)?;
            Ok(JudgeVerdict {
                summary,
                step_function: Some(function),
                rationality_reason: nonempty(item(&items, 3)),
                rational: Some(rational),
                completion_reason: nonempty(item(&items, 5)),
                complete: item(&items, 6).and_then(|t| parse_bool(t, 6).ok()),
            })
        }
        StepKind::Final => {
            let text = item(&items, 3).ok_or(VerdictError::MissingItem(3))?;
            Ok(JudgeVerdict {
                summary,
                step_function: None,
                rationality_reason: None,
                rational: None,
                completion_reason: nonempty(item(&items, 2)),
                complete: Some(parse_bool(text, 3)?),
            })
        }
    }
}

fn tf(b: bool) -> &'static str {
    if b {
        "True"
    } else {
        "False"
    }
}

/// Writes a verdict in the numbered format the judge prompts ask for.
/// Used by mock judges; [`parse_verdict`] inverts it.
pub fn render_verdict(v: &JudgeVerdict, kind: StepKind) -> String {
    let mut lines = vec![format!("1. {}", v.summary)];
    match kind {
        StepKind::Middle => {
            lines.push(format!(
                "2. {FUNCTION_MARKER} {}",
                v.step_function.as_deref().unwrap_or_default()
            ));
            lines.push(format!("3. {}", v.rationality_reason.as_deref().unwrap_or_default()));
            lines.push(format!("4. {}", tf(v.rational.unwrap_or(false))));
            if v.completion_reason.is_some() || v.complete.is_some() {
                lines.push(format!("5. {}", v.completion_reason.as_deref().unwrap_or_default()));
            }
            if let Some(c) = v.complete {
                lines.push(format!("6. {}", tf(c)));
            }
        }
        StepKind::Final => {
            lines.push(format!("2. {}", v.completion_reason.as_deref().unwrap_or_default()));
            lines.push(format!("3. {}", tf(v.complete.unwrap_or(false))));
        }
    }
    lines.join("\n")
}

/// Why a step got no usable verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeFailure {
    pub code: String,
    pub message: String,
}

impl From<VerdictError> for JudgeFailure {
    fn from(e: VerdictError) -> Self {
        Self {
            code: e.code().into(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedStep {
    pub reason: String,
    pub detail: String,
    pub step: TrajectoryStep,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub kept: Vec<TrajectoryStep>,
    /// Steps the judge ruled out.
    pub rejected: Vec<RejectedStep>,
    /// Steps whose verdict could not be read; kept apart for review.
    pub quarantined: Vec<RejectedStep>,
}

/// Keeps rational middle steps (description := judged function) and final
/// steps judged complete (description := completion analysis). Histories
/// of later steps are left as recorded.
pub fn filter_steps(steps: &[TrajectoryStep], verdicts: &[Result<JudgeVerdict, JudgeFailure>]) -> FilterOutcome {
    assert_eq!(steps.len(), verdicts.len(), "steps and verdicts must align");
    let mut out = FilterOutcome::default();
    for (step, verdict) in steps.iter().zip(verdicts) {
        let v = match verdict {
            Ok(v) => v,
            Err(e) => {
                out.quarantined.push(RejectedStep {
                    reason: e.code.clone(),
                    detail: e.message.clone(),
                    step: step.clone(),
                });
                continue;
            }
        };
        let (keep, description, reason) = if step.is_final() {
            (v.complete == Some(true), v.completion_reason.clone(), "incomplete")
        } else {
            (v.rational == Some(true), v.step_function.clone(), "irrational")
        };
        if keep {
            let mut kept = step.clone();
            kept.step_description = description.or_else(|| step.step_description.clone());
            out.kept.push(kept);
        } else {
            out.rejected.push(RejectedStep {
                reason: reason.to_string(),
                detail: v
                    .rationality_reason
                    .clone()
                    .or_else(|| v.completion_reason.clone())
                    .unwrap_or_default(),
                step: step.clone(),
            });
        }
    }
    out
}

/// Action code with its point in block-local form:
/// `CLICK(block, x', y')`, with `x', y'` normalized within the block.
pub fn encode_ubp_action(a: &Action, map: &ResizeMap) -> Result<String, GeometryError> {
    let Some(ActionPos::Point(p)) = a.pos else {
        return Ok(a.to_code());
    };
    let local = to_block_local(map.point_to_grid(p), &map.grid)?;
    let mut args = vec![
        local.block.to_string(),
        normalize_coord(local.x, map.grid.block_w).to_string(),
        normalize_coord(local.y, map.grid.block_h).to_string(),
    ];
    let tail = Action { pos: None, ..a.clone() }.to_code();
    if let Some(open) = tail.find('(') {
        args.push(tail[open + 1..tail.len() - 1].to_string());
    }
    Ok(format!("{}({})", a.kind, args.join(", ")))
}

/// Inverse of [`encode_ubp_action`], back to source pixels. Point kinds
/// take three integers; other kinds parse as usual.
pub fn decode_ubp_action(code: &str, space: &ActionSpace, map: &ResizeMap) -> Option<Action> {
    let call = parse_call(code).ok()?;
    let spec = space.kind(&call.name)?;
    if spec.schema != crate::actions::ArgSchema::Point {
        return crate::actions::parse_action(code, space).ok();
    }
    let [Arg::Int(b), Arg::Int(x), Arg::Int(y)] = call.args.as_slice() else {
        return None;
    };
    let (b, x, y) = (
        u32::try_from(*b).ok()?,
        u32::try_from(*x).ok()?,
        u32::try_from(*y).ok()?,
    );
    let g = &map.grid;
    let local = BlockLocalPoint::new(
        b,
        denormalize_coord(x.min(999), g.block_w).min(g.block_w - 1),
        denormalize_coord(y.min(999), g.block_h).min(g.block_h - 1),
    );
    let p = map.point_to_source(from_block_local(local, g).ok()?);
    Some(Action {
        kind: spec.name.clone(),
        pos: Some(ActionPos::Point(PixelPoint::new(p.x, p.y))),
        attr: None,
    })
}

/// The last [`MAX_HISTORY`] entries, oldest first.
pub fn truncate_history(history: &[String]) -> &[String] {
    &history[history.len().saturating_sub(MAX_HISTORY)..]
}

/// Chain-of-thought navigation sample: the prompt carries the task, recent
/// history and action space; the target is the step description followed
/// by the block-local action code.
pub fn assemble_cot_sample(
    step: &TrajectoryStep,
    pool: &PromptPool,
    space: &ActionSpace,
    map: &ResizeMap,
) -> Result<TrainingSample, NavError> {
    let description = step
        .step_description
        .as_deref()
        .filter(|d| !d.trim().is_empty())
        .ok_or_else(|| NavError::MissingDescription(step.key()))?;
    if !space.accepts(&step.gold_action) {
        return Err(NavError::ActionNotInSpace(step.key(), step.gold_action.to_code()));
    }
    let history = numbered_lines(truncate_history(&step.history));
    let action_space = space.describe(true);
    let body = render(
        &pool.templates(Task::Navigation)[0],
        &[
            ("task", step.task.as_str()),
            ("history", history.as_str()),
            ("action_space", action_space.as_str()),
        ],
    );
    let code = encode_ubp_action(&step.gold_action, map).map_err(|e| NavError::Geometry(step.key(), e))?;
    Ok(TrainingSample::new(
        Task::Navigation,
        format!("{IMAGE_TAG}\n{body}"),
        format!("{}\n{code}", description.trim()),
        &step.key(),
        map.grid,
    ))
}

/// A function description recovered from a cleaned click step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFunction {
    pub screenshot_ref: String,
    pub screen: Option<Extent>,
    pub bbox: PixelBox,
    pub function: String,
}

/// Click steps with a target box and a description become function pairs.
pub fn derive_mobile_functions(steps: &[TrajectoryStep]) -> Vec<StepFunction> {
    steps
        .iter()
        .filter(|s| s.gold_action.kind == "CLICK" && s.gold_action.point_pos().is_some())
        .filter_map(|s| {
            Some(StepFunction {
                screenshot_ref: s.screenshot_ref.clone(),
                screen: s.screen,
                bbox: s.gold_box?,
                function: s.step_description.clone().filter(|d| !d.trim().is_empty())?,
            })
        })
        .collect()
}
