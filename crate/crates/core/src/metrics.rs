//! Step-level navigation metrics: click accuracy, element accuracy,
//! operation F1, step success rate and the action matching score.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actions::{Action, ActionPos};
use crate::geometry::{Extent, PixelBox, PixelPoint};

/// Tap distance threshold as a fraction of the screen, compared as the
/// exact rational 14/100.
const TAP_NUM: u128 = 14;
const TAP_DEN: u128 = 100;

/// Area factor for the enlarged gold box, as the rational 12/5 (= 2.4).
const BOX_AREA_NUM: u128 = 12;
const BOX_AREA_DEN: u128 = 5;

/// One gold step joined with its prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub id: String,
    pub gold: Action,
    #[serde(default)]
    pub gold_box: Option<PixelBox>,
    /// `None` when the agent produced no (parseable) action.
    pub pred: Option<Action>,
    pub screen: Extent,
}

/// Closed-boundary hit test.
pub fn click_hit(pred: PixelPoint, gold_box: &PixelBox) -> bool {
    gold_box.contains(pred)
}

fn tokens(s: &str) -> HashMap<String, usize> {
    let mut bag = HashMap::new();
    for t in s.split_whitespace() {
        *bag.entry(t.to_lowercase()).or_insert(0) += 1;
    }
    bag
}

/// Bag-of-tokens F1 after lower-casing and whitespace splitting.
pub fn op_f1(pred: &str, gold: &str) -> f64 {
    let (p, g) = (tokens(pred), tokens(gold));
    let (np, ng): (usize, usize) = (p.values().sum(), g.values().sum());
    if np == 0 && ng == 0 {
        return 1.0;
    }
    if np == 0 || ng == 0 {
        return 0.0;
    }
    let common: usize = p.iter().map(|(t, &c)| c.min(g.get(t).copied().unwrap_or(0))).sum();
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / np as f64;
    let recall = common as f64 / ng as f64;
    2.0 * precision * recall / (precision + recall)
}

/// The operation string scored by [`op_f1`]: lower-case kind followed by the
/// payload or scroll direction, e.g. `"input copenhagen"`.
pub fn op_string(a: &Action) -> String {
    let mut s = a.kind.to_lowercase();
    if let Some(d) = a.scroll_dir() {
        s.push(' ');
        s.push_str(d.as_str());
    }
    if let Some(t) = &a.attr {
        s.push(' ');
        s.push_str(t);
    }
    s
}

fn norm_payload(a: &Action) -> Option<String> {
    a.attr.as_ref().map(|t| t.trim().to_lowercase())
}

/// Whether the prediction targets the gold element. With a gold box the
/// predicted point must fall inside it; without one the positional parts
/// must agree (both absent for key presses, same direction for scrolls).
pub fn element_hit(rec: &StepRecord) -> bool {
    let Some(pred) = &rec.pred else { return false };
    match (&rec.gold_box, pred.point_pos()) {
        (Some(b), Some(p)) => click_hit(p, b),
        (Some(_), None) => false,
        (None, _) => pred.pos == rec.gold.pos,
    }
}

/// Same kind and same payload after trimming and lower-casing.
pub fn op_match(rec: &StepRecord) -> bool {
    rec.pred.as_ref().is_some_and(|pred| {
        pred.kind.eq_ignore_ascii_case(&rec.gold.kind) && norm_payload(pred) == norm_payload(&rec.gold)
    })
}

pub fn step_success(rec: &StepRecord) -> bool {
    element_hit(rec) && op_match(rec)
}

/// Axis-normalized distance between two points is at most 0.14.
pub fn tap_within_distance(a: PixelPoint, b: PixelPoint, screen: Extent) -> bool {
    let dx = u128::from(a.x.abs_diff(b.x));
    let dy = u128::from(a.y.abs_diff(b.y));
    let (w, h) = (u128::from(screen.w.max(1)), u128::from(screen.h.max(1)));
    // (dx/w)^2 + (dy/h)^2 <= (num/den)^2, cleared of denominators.
    TAP_DEN * TAP_DEN * (dx * dx * h * h + dy * dy * w * w) <= TAP_NUM * TAP_NUM * w * w * h * h
}

/// Point lies in `b` enlarged to 2.4 times its area about its center.
pub fn in_enlarged_box(p: PixelPoint, b: &PixelBox) -> bool {
    // |2(p - c)| <= sqrt(2.4) * w on each axis, squared.
    let dx = 2 * u128::from(p.x.abs_diff(b.cx));
    let dy = 2 * u128::from(p.y.abs_diff(b.cy));
    let (w, h) = (u128::from(b.w), u128::from(b.h));
    BOX_AREA_DEN * dx * dx <= BOX_AREA_NUM * w * w && BOX_AREA_DEN * dy * dy <= BOX_AREA_NUM * h * h
}

/// Per-step action matching predicate.
pub fn action_match(rec: &StepRecord) -> bool {
    let Some(pred) = &rec.pred else { return false };
    if !pred.kind.eq_ignore_ascii_case(&rec.gold.kind) {
        return false;
    }
    match (rec.gold.pos, pred.pos) {
        (Some(ActionPos::Point(g)), Some(ActionPos::Point(p))) => {
            tap_within_distance(g, p, rec.screen)
                || rec
                    .gold_box
                    .is_some_and(|b| in_enlarged_box(g, &b) && in_enlarged_box(p, &b))
        }
        (Some(ActionPos::Scroll(g)), Some(ActionPos::Scroll(p))) => g.axis() == p.axis(),
        (g, p) => g == p && norm_payload(pred) == norm_payload(&rec.gold),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub id: String,
    pub element_hit: bool,
    pub op_match: bool,
    pub op_f1: f64,
    pub step_success: bool,
    pub action_match: bool,
    /// Present only for steps with a gold box and a point-type gold action.
    pub click_hit: Option<bool>,
}

/// Aggregates are `None` when there is nothing to average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub steps: usize,
    pub click_steps: usize,
    pub click_acc: Option<f64>,
    pub ele_acc: Option<f64>,
    pub op_acc: Option<f64>,
    pub op_f1_mean: Option<f64>,
    pub step_sr: Option<f64>,
    pub ams: Option<f64>,
    pub per_step: Vec<StepOutcome>,
}

pub fn score_step(rec: &StepRecord) -> StepOutcome {
    let click = match (rec.gold.point_pos(), &rec.gold_box) {
        (Some(_), Some(b)) => Some(
            rec.pred
                .as_ref()
                .and_then(Action::point_pos)
                .is_some_and(|p| click_hit(p, b)),
        ),
        _ => None,
    };
    StepOutcome {
        id: rec.id.clone(),
        element_hit: element_hit(rec),
        op_match: op_match(rec),
        op_f1: rec
            .pred
            .as_ref()
            .map_or(0.0, |p| op_f1(&op_string(p), &op_string(&rec.gold))),
        step_success: step_success(rec),
        action_match: action_match(rec),
        click_hit: click,
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn rate(outcomes: &[StepOutcome], f: impl Fn(&StepOutcome) -> bool) -> Option<f64> {
    mean(outcomes.iter().map(|o| if f(o) { 1.0 } else { 0.0 }))
}

pub fn evaluate(records: &[StepRecord]) -> EvalReport {
    let per_step: Vec<StepOutcome> = records.par_iter().map(score_step).collect();
    let clicks: Vec<bool> = per_step.iter().filter_map(|o| o.click_hit).collect();
    EvalReport {
        steps: per_step.len(),
        click_steps: clicks.len(),
        click_acc: mean(clicks.iter().map(|&c| if c { 1.0 } else { 0.0 })),
        ele_acc: rate(&per_step, |o| o.element_hit),
        op_acc: rate(&per_step, |o| o.op_match),
        op_f1_mean: mean(per_step.iter().map(|o| o.op_f1)),
        step_sr: rate(&per_step, |o| o.step_success),
        ams: rate(&per_step, |o| o.action_match),
        per_step,
    }
}

impl EvalReport {
    /// Aligned two-column summary for terminals.
    pub fn table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}", 100.0 * v));
        let rows = [
            ("Click.Acc", fmt(self.click_acc)),
            ("Ele.Acc", fmt(self.ele_acc)),
            ("Op.Acc", fmt(self.op_acc)),
            ("Op.F1", fmt(self.op_f1_mean)),
            ("Step SR", fmt(self.step_sr)),
            ("AMS", fmt(self.ams)),
        ];
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>8}", "metric", "%");
        for (name, value) in rows {
            let _ = writeln!(out, "{name:<10} {value:>8}");
        }
        let _ = writeln!(out, "steps: {} (click steps: {})", self.steps, self.click_steps);
        out
    }
}

/// A gold line of an evaluation set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldStep {
    pub id: String,
    pub action: Action,
    #[serde(default)]
    pub gold_box: Option<PixelBox>,
    pub screen: Extent,
}

/// A prediction line; `action` is the raw code the agent emitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub action: String,
}

/// Joins gold steps with predictions by id, in gold order. Missing or
/// unparseable predictions become `pred: None`.
pub fn join_records(
    gold: &[GoldStep],
    preds: &[Prediction],
    parse: impl Fn(&str) -> Option<Action>,
) -> Vec<StepRecord> {
    let by_id: HashMap<&str, &Prediction> = preds.iter().map(|p| (p.id.as_str(), p)).collect();
    gold.iter()
        .map(|g| StepRecord {
            id: g.id.clone(),
            gold: g.action.clone(),
            gold_box: g.gold_box,
            pred: by_id.get(g.id.as_str()).and_then(|p| parse(&p.action)),
            screen: g.screen,
        })
        .collect()
}
