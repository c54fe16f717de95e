use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Duration;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{thread_pool, unit_rng, Outputs, PipelineConfig, PipelineError, Stats};
use crate::actions::{default_spaces, parse_action, ActionRegistry, ActionSpace};
use crate::geometry::{Extent, PixelBox, ResizeMap};
use crate::metrics::{evaluate, join_records, EvalReport, GoldStep, Prediction};
use crate::navdata::client::{
    judge_step, Bounded, CachedClient, Capability, CommandClient, GenerationClient, MockClient, MockJudge, Retrying,
};
use crate::navdata::level2::{element_label, run_level2_generation, Level2Failure};
use crate::navdata::{
    assemble_cot_sample, derive_mobile_functions, filter_steps, JudgeFailure, JudgeVerdict, TrajectoryStep,
};
use crate::samplegen::{
    gen_bbox2dom, gen_bbox2text, gen_function2bbox, gen_text2bbox, repack_list_samples, FunctionTarget, PromptPool,
    TrainingSample,
};
use crate::snapshot::{is_clickable, mark_elements, DomNode, Snapshot};
use crate::Diagnostic;

fn prompt_pool(cfg: &PipelineConfig) -> Result<PromptPool, PipelineError> {
    match &cfg.prompts_dir {
        Some(dir) => PromptPool::load_dir(dir).map_err(|e| PipelineError::Config(e.to_string())),
        None => Ok(PromptPool::builtin()),
    }
}

fn action_space(cfg: &PipelineConfig) -> Result<ActionSpace, PipelineError> {
    let registry = match &cfg.action_spaces_file {
        Some(p) => ActionRegistry::load(p).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?,
        None => default_spaces(),
    };
    registry
        .get(&cfg.action_space)
        .cloned()
        .ok_or_else(|| PipelineError::Config(format!("unknown action space {:?}", cfg.action_space)))
}

fn read(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}

/// Snapshot files (`*.json`) in `dir`, sorted by name, parsed and checked.
pub(crate) fn load_snapshots(dir: &Path) -> Result<Vec<(PathBuf, Snapshot)>, PipelineError> {
    let entries = std::fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut issues = Vec::new();
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for path in paths {
        let text = read(&path)?;
        match serde_json::from_str::<Snapshot>(&text) {
            Ok(s) => {
                for issue in s.validate() {
                    issues.push(format!("{}: {}: {}", path.display(), issue.path, issue.message));
                }
                if !ids.insert(s.id.clone()) {
                    issues.push(format!("{}: id: duplicate snapshot id {:?}", path.display(), s.id));
                }
                out.push((path, s));
            }
            Err(e) => issues.push(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())),
        }
    }
    if issues.is_empty() {
        Ok(out)
    } else {
        Err(PipelineError::Schema(issues))
    }
}

fn jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let text = read(path)?;
    let mut out = Vec::new();
    let mut issues = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(e) => issues.push(format!("{}:{}:{}: {e}", path.display(), i + 1, e.column())),
        }
    }
    if issues.is_empty() {
        Ok(out)
    } else {
        Err(PipelineError::Schema(issues))
    }
}

fn selected_snapshots(cfg: &PipelineConfig) -> Result<Vec<(PathBuf, Snapshot)>, PipelineError> {
    let mut snaps = load_snapshots(cfg.require_input()?)?;
    if let Some(lang) = &cfg.language {
        snaps.retain(|(_, s)| &s.language == lang);
    }
    Ok(snaps)
}

fn count_diags(stats: &mut Stats, diags: &[Diagnostic]) {
    for d in diags {
        stats.add(format!("diag.{}", d.code), 1);
    }
}

fn count_samples(stats: &mut Stats, samples: &[TrainingSample]) {
    for s in samples {
        stats.add(s.task.as_str(), 1);
    }
}

/// Checks every snapshot file in the input directory.
pub fn cmd_validate(cfg: &PipelineConfig) -> Result<Stats, PipelineError> {
    let snaps = load_snapshots(cfg.require_input()?)?;
    let mut stats = Stats::new("collect-validate");
    stats.add("snapshots", snaps.len());
    Ok(stats)
}

/// text2bbox, bbox2text and bbox2dom samples for every snapshot.
pub fn cmd_gen_level1(cfg: &PipelineConfig) -> Result<Stats, PipelineError> {
    let out_dir = cfg.require_output()?.to_path_buf();
    let snaps = selected_snapshots(cfg)?;
    let pool = prompt_pool(cfg)?;
    let results: Vec<(Vec<TrainingSample>, Vec<Diagnostic>)> = thread_pool(cfg.workers)?.install(|| {
        snaps
            .par_iter()
            .map(|(_, s)| {
                let mut rng = unit_rng(cfg.seed, "level1", &s.id);
                let mut diags = Vec::new();
                let marks = mark_elements(s, cfg.grid_step);
                let map = ResizeMap::for_image(s.viewport(), cfg.max_blocks, cfg.block_w, cfg.block_h);
                let budget = cfg.token_budget;
                let mut samples = gen_text2bbox(s, &marks, &pool, &map, budget, &mut rng, &mut diags);
                samples.extend(gen_bbox2text(s, &marks, &pool, &map, budget, &mut rng, &mut diags));
                match gen_bbox2dom(s, &marks, &pool, &map, budget, &mut rng) {
                    Ok(sample) => samples.push(sample),
                    Err(e) => diags.push(Diagnostic::new("bbox2dom_skipped", format!("{}: {e}", s.id))),
                }
                (samples, diags)
            })
            .collect()
    });
    let (samples, diags): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let samples: Vec<TrainingSample> = samples.into_iter().flatten().collect();
    let diags: Vec<Diagnostic> = diags.into_iter().flatten().collect();

    let mut stats = Stats::new("gen-level1");
    stats.add("snapshots", snaps.len());
    count_samples(&mut stats, &samples);
    count_diags(&mut stats, &diags);
    let mut out = Outputs::default();
    out.jsonl("level1.jsonl", &samples);
    out.jsonl("level1.diagnostics.jsonl", &diags);
    out.commit(&out_dir)?;
    Ok(stats)
}

fn quoted_after<'a>(re: &Regex, text: &'a str) -> Option<&'a str> {
    re.captures(text).and_then(|c| c.get(1)).map(|m| m.as_str())
}

/// Deterministic stand-ins for the describe, refine and judge models.
pub fn mock_clients() -> (
    Box<dyn GenerationClient>,
    Box<dyn GenerationClient>,
    Box<dyn GenerationClient>,
) {
    static LABEL: OnceLock<Regex> = OnceLock::new();
    static PURPOSE: OnceLock<Regex> = OnceLock::new();
    let describe = MockClient::new(|req| {
        let re = LABEL.get_or_init(|| Regex::new(r"click on the '(.*)' on the ").expect("static regex"));
        let label = quoted_after(re, &req.prompt).unwrap_or("element").replace('"', "'");
        Ok(format!(
            "The element is highlighted on the page.\nThe purpose is \"to activate {label}\"."
        ))
    });
    let refine = MockClient::new(|req| {
        let re = PURPOSE.get_or_init(|| Regex::new(r#"original purpose "(.*)" into"#).expect("static regex"));
        Ok(quoted_after(re, &req.prompt).unwrap_or("to do nothing").to_string())
    });
    (Box::new(describe), Box::new(refine), Box::new(MockJudge::default()))
}

fn external_client(
    cfg: &PipelineConfig,
    command: Option<&String>,
    capability: Capability,
) -> Result<Box<dyn GenerationClient>, PipelineError> {
    let key = match capability {
        Capability::DescribeFunction => "describe_command",
        Capability::RefineFunction => "refine_command",
        Capability::JudgeStep => "judge_command",
    };
    let cmd = command
        .and_then(|c| CommandClient::from_command_line(c))
        .ok_or_else(|| PipelineError::Config(format!("{key} is not set (or use mock_clients)")))?;
    let retrying = Retrying::new(cmd, cfg.retries + 1, Duration::from_millis(500));
    Ok(match &cfg.cache_dir {
        Some(dir) => {
            let cached = CachedClient::new(retrying, dir).map_err(|e| PipelineError::io(dir, e))?;
            Box::new(Bounded::new(cached, cfg.concurrency))
        }
        None => Box::new(Bounded::new(retrying, cfg.concurrency)),
    })
}

type ClientPair = (Box<dyn GenerationClient>, Box<dyn GenerationClient>);

fn level2_clients(cfg: &PipelineConfig) -> Result<ClientPair, PipelineError> {
    if cfg.mock_clients {
        let (d, r, _) = mock_clients();
        return Ok((d, r));
    }
    Ok((
        external_client(cfg, cfg.describe_command.as_ref(), Capability::DescribeFunction)?,
        external_client(cfg, cfg.refine_command.as_ref(), Capability::RefineFunction)?,
    ))
}

fn judge_client(cfg: &PipelineConfig) -> Result<Box<dyn GenerationClient>, PipelineError> {
    if cfg.mock_clients {
        return Ok(mock_clients().2);
    }
    external_client(cfg, cfg.judge_command.as_ref(), Capability::JudgeStep)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FunctionRecord {
    snapshot_id: String,
    node: usize,
    bbox: PixelBox,
    function: String,
}

fn load_screenshot(dir: &Path, s: &Snapshot) -> Option<image::RgbImage> {
    let path = dir.join(&s.screenshot_ref);
    if !path.is_file() {
        return None;
    }
    match image::open(&path) {
        Ok(img) => Some(img.to_rgb8()),
        Err(e) => {
            log::warn!("{}: cannot read screenshot: {e}", path.display());
            None
        }
    }
}

/// Function descriptions for clickable marked elements, packed into
/// function2bbox samples.
pub fn cmd_gen_level2(cfg: &PipelineConfig) -> Result<Stats, PipelineError> {
    let out_dir = cfg.require_output()?.to_path_buf();
    let in_dir = cfg.require_input()?.to_path_buf();
    let snaps = selected_snapshots(cfg)?;
    let pool = prompt_pool(cfg)?;
    let (describe, refine) = level2_clients(cfg)?;
    type Unit = (
        Vec<TrainingSample>,
        Vec<FunctionRecord>,
        Vec<Level2Failure>,
        Vec<Diagnostic>,
    );
    let results: Vec<Unit> = thread_pool(cfg.workers)?.install(|| {
        snaps
            .par_iter()
            .map(|(_, s)| {
                let marks = mark_elements(s, cfg.grid_step);
                let index = s.index();
                let screenshot = load_screenshot(&in_dir, s);
                let mut functions = Vec::new();
                let mut records = Vec::new();
                let mut failures = Vec::new();
                for &id in &marks {
                    let node = index.node(id);
                    if !is_clickable(node) || element_label(s, id).is_none() {
                        continue;
                    }
                    match run_level2_generation(s, id, screenshot.as_ref(), describe.as_ref(), refine.as_ref()) {
                        Ok(f) => {
                            records.push(FunctionRecord {
                                snapshot_id: s.id.clone(),
                                node: id.0,
                                bbox: node.bbox,
                                function: f.clone(),
                            });
                            functions.push((FunctionTarget::Node(id), f));
                        }
                        Err(e) => failures.push(e),
                    }
                }
                let mut rng = unit_rng(cfg.seed, "level2", &s.id);
                let mut diags = Vec::new();
                let map = ResizeMap::for_image(s.viewport(), cfg.max_blocks, cfg.block_w, cfg.block_h);
                let samples = gen_function2bbox(s, &functions, &pool, &map, cfg.token_budget, &mut rng, &mut diags);
                (samples, records, failures, diags)
            })
            .collect()
    });
    let mut samples = Vec::new();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut diags = Vec::new();
    for (s, r, f, d) in results {
        samples.extend(s);
        records.extend(r);
        failures.extend(f);
        diags.extend(d);
    }
    let mut stats = Stats::new("gen-level2");
    stats.add("snapshots", snaps.len());
    stats.add("functions", records.len());
    stats.add("quarantined", failures.len());
    count_samples(&mut stats, &samples);
    count_diags(&mut stats, &diags);
    let mut out = Outputs::default();
    out.jsonl("level2.jsonl", &samples);
    out.jsonl("level2.functions.jsonl", &records);
    out.jsonl("level2.quarantine.jsonl", &failures);
    out.jsonl("level2.diagnostics.jsonl", &diags);
    out.commit(&out_dir)?;
    Ok(stats)
}

fn check_trajectories(path: &Path, steps: &[TrajectoryStep]) -> Vec<String> {
    let mut last: BTreeMap<&str, usize> = BTreeMap::new();
    let mut seen = HashSet::new();
    let mut issues = Vec::new();
    for s in steps {
        let e = last.entry(&s.trajectory_id).or_insert(0);
        *e = (*e).max(s.step_index);
        if !seen.insert((s.trajectory_id.as_str(), s.step_index)) {
            issues.push(format!("{}: duplicate step {}", path.display(), s.key()));
        }
    }
    for s in steps {
        let is_last = last[s.trajectory_id.as_str()] == s.step_index;
        if s.is_final() != is_last {
            issues.push(format!(
                "{}: step {}: next_screenshot_ref must be absent exactly on the final step",
                path.display(),
                s.key()
            ));
        }
    }
    issues
}

/// Judges every trajectory step, keeps the sound ones and turns them into
/// chain-of-thought samples; cleaned click steps also yield function2bbox
/// samples.
pub fn cmd_gen_level3(cfg: &PipelineConfig) -> Result<Stats, PipelineError> {
    let out_dir = cfg.require_output()?.to_path_buf();
    let path = cfg.require_input()?;
    let mut steps: Vec<TrajectoryStep> = jsonl(path)?;
    let issues = check_trajectories(path, &steps);
    if !issues.is_empty() {
        return Err(PipelineError::Schema(issues));
    }
    steps.sort_by(|a, b| (&a.trajectory_id, a.step_index).cmp(&(&b.trajectory_id, b.step_index)));
    let pool = prompt_pool(cfg)?;
    let space = action_space(cfg)?;
    let judge = judge_client(cfg)?;

    let verdicts: Vec<Result<JudgeVerdict, JudgeFailure>> =
        thread_pool(cfg.workers)?.install(|| steps.par_iter().map(|s| judge_step(s, judge.as_ref())).collect());
    let filtered = filter_steps(&steps, &verdicts);

    let mut diags = Vec::new();
    let mut samples = Vec::new();
    for step in &filtered.kept {
        let Some(screen) = step.screen else {
            diags.push(Diagnostic::new(
                "missing_screen",
                format!("{}: no screen extent", step.key()),
            ));
            continue;
        };
        let map = ResizeMap::for_image(screen, cfg.max_blocks, cfg.block_w, cfg.block_h);
        match assemble_cot_sample(step, &pool, &space, &map) {
            Ok(s) => samples.push(s),
            Err(e) => diags.push(Diagnostic::new("cot_skipped", e.to_string())),
        }
    }

    let mut by_screen: BTreeMap<String, (Extent, Vec<(FunctionTarget, String)>)> = BTreeMap::new();
    for f in derive_mobile_functions(&filtered.kept) {
        let Some(screen) = f.screen else { continue };
        by_screen
            .entry(f.screenshot_ref.clone())
            .or_insert_with(|| (screen, Vec::new()))
            .1
            .push((FunctionTarget::Box(f.bbox), f.function));
    }
    let mut function_samples = Vec::new();
    for (shot, (screen, functions)) in &by_screen {
        let page = Snapshot {
            id: shot.clone(),
            source_url: String::new(),
            viewport_w: screen.w,
            viewport_h: screen.h,
            screenshot_ref: shot.clone(),
            language: String::new(),
            dom: DomNode::new("screen", PixelBox::full(*screen)),
            icons: Vec::new(),
        };
        let map = ResizeMap::for_image(*screen, cfg.max_blocks, cfg.block_w, cfg.block_h);
        let mut rng = unit_rng(cfg.seed, "level3-functions", shot);
        function_samples.extend(gen_function2bbox(
            &page,
            functions,
            &pool,
            &map,
            cfg.token_budget,
            &mut rng,
            &mut diags,
        ));
    }

    let mut stats = Stats::new("gen-level3");
    stats.add("steps", steps.len());
    stats.add("kept", filtered.kept.len());
    stats.add("rejected", filtered.rejected.len());
    stats.add("quarantined", filtered.quarantined.len());
    count_samples(&mut stats, &samples);
    count_samples(&mut stats, &function_samples);
    count_diags(&mut stats, &diags);
    let mut out = Outputs::default();
    out.jsonl("level3.jsonl", &samples);
    out.jsonl("level3.cleaned.jsonl", &filtered.kept);
    out.jsonl("level3.rejected.jsonl", &filtered.rejected);
    out.jsonl("level3.quarantine.jsonl", &filtered.quarantined);
    out.jsonl("level3.function2bbox.jsonl", &function_samples);
    out.jsonl("level3.diagnostics.jsonl", &diags);
    out.commit(&out_dir)?;
    Ok(stats)
}

/// Re-packs list samples under the configured budget. Other samples pass
/// through unless they exceed the budget on their own.
pub fn cmd_pack(cfg: &PipelineConfig) -> Result<Stats, PipelineError> {
    let out_dir = cfg.require_output()?.to_path_buf();
    let samples: Vec<TrainingSample> = jsonl(cfg.require_input()?)?;
    let mut diags = Vec::new();
    let mut packed = Vec::new();
    let mut run: Vec<TrainingSample> = Vec::new();
    for s in &samples {
        if s.task.is_list() {
            run.push(s.clone());
            continue;
        }
        packed.extend(repack_list_samples(&run, cfg.token_budget, &mut diags));
        run.clear();
        if s.est_tokens <= cfg.token_budget {
            packed.push(s.clone());
        } else {
            diags.push(Diagnostic::new(
                "sample_over_budget",
                format!("{}: {} sample has {} tokens", s.snapshot_id, s.task, s.est_tokens),
            ));
        }
    }
    packed.extend(repack_list_samples(&run, cfg.token_budget, &mut diags));

    let mut stats = Stats::new("pack");
    stats.add("input", samples.len());
    stats.add("output", packed.len());
    count_diags(&mut stats, &diags);
    let mut out = Outputs::default();
    out.jsonl("packed.jsonl", &packed);
    out.jsonl("pack.diagnostics.jsonl", &diags);
    out.commit(&out_dir)?;
    Ok(stats)
}

/// Scores predictions against gold steps. Writes `eval.json` when an
/// output directory is configured.
pub fn cmd_eval(cfg: &PipelineConfig) -> Result<EvalReport, PipelineError> {
    let gold_path = cfg
        .gold
        .as_deref()
        .ok_or_else(|| PipelineError::Config("no gold file (--gold)".into()))?;
    let pred_path = cfg
        .pred
        .as_deref()
        .ok_or_else(|| PipelineError::Config("no prediction file (--pred)".into()))?;
    let gold: Vec<GoldStep> = jsonl(gold_path)?;
    let preds: Vec<Prediction> = jsonl(pred_path)?;
    let space = action_space(cfg)?;
    let issues: Vec<String> = gold
        .iter()
        .filter(|g| !space.accepts(&g.action))
        .map(|g| {
            format!(
                "{}: {}: action {} not in space {}",
                gold_path.display(),
                g.id,
                g.action,
                space.name
            )
        })
        .collect();
    if !issues.is_empty() {
        return Err(PipelineError::Schema(issues));
    }
    let records = join_records(&gold, &preds, |code| parse_action(code, &space).ok());
    let report = evaluate(&records);
    if let Some(dir) = &cfg.output {
        let mut out = Outputs::default();
        out.text(
            "eval.json",
            serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        );
        out.commit(dir)?;
    }
    Ok(report)
}
