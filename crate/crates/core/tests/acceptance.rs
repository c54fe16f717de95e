//! Acceptance gate. Runs every criterion, prints one `PASS`/`FAIL` line per
//! criterion and exits non-zero if any failed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use guikit::actions::{default_spaces, parse_action};
use guikit::geometry::{from_block_local, to_block_local, BlockGrid, BlockLocalPoint, Extent, PixelBox, PixelPoint};
use guikit::metrics::{action_match, op_f1, StepRecord};
use guikit::navdata::level2::{build_describe_prompt, build_refine_prompt, describe_input};
use guikit::navdata::{build_final_prompt, build_middle_prompt, TrajectoryStep};
use guikit::samplegen::{decode_block_bbox, pack_costs, parse_bbox, split_list_sample, Task, TrainingSample};
use guikit::snapshot::{prune_tree, DomNode, MarkSet, NodeId, Snapshot};

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Check {
    let took = start.elapsed();
    ensure(took <= limit, || format!("took {took:?}, limit {limit:?}"))
}

fn ubp_worked_example() -> Check {
    let start = Instant::now();
    let q = BlockLocalPoint::new(1, 168, 245);
    let tall = from_block_local(q, &BlockGrid::with_default_blocks(1, 2)).map_err(|e| e.to_string())?;
    let wide = from_block_local(q, &BlockGrid::with_default_blocks(2, 1)).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    ensure(tall == PixelPoint::new(168, 693), || format!("1x2 gave {tall:?}"))?;
    ensure(wide == PixelPoint::new(616, 245), || format!("2x1 gave {wide:?}"))?;
    ensure(took < Duration::from_millis(1), || format!("took {took:?}"))
}

fn ubp_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    for case in 0..100_000 {
        let n_w = rng.random_range(1..=40);
        let n_h = rng.random_range(1..=40 / n_w);
        let (bw, bh) = if rng.random_bool(0.5) {
            (448, 448)
        } else {
            (rng.random_range(1..=1024), rng.random_range(1..=1024))
        };
        let g = BlockGrid::new(n_w, n_h, bw, bh).map_err(|e| e.to_string())?;
        let p = PixelPoint::new(rng.random_range(0..n_w * bw), rng.random_range(0..n_h * bh));
        let q = to_block_local(p, &g).map_err(|e| format!("case {case}: {e}"))?;
        // Independent expectation for the triple itself.
        let expect = BlockLocalPoint::new((p.y / bh) * n_w + p.x / bw, p.x % bw, p.y % bh);
        ensure(q == expect, || format!("case {case}: {p:?} on {g:?} gave {q:?}"))?;
        let back = from_block_local(q, &g).map_err(|e| format!("case {case}: {e}"))?;
        ensure(back == p, || format!("case {case}: {p:?} came back as {back:?}"))?;
    }
    within(Duration::from_secs(1), start)
}

fn ubp_ambiguity_witness() -> Check {
    let tall = BlockGrid::with_default_blocks(1, 2);
    let wide = BlockGrid::with_default_blocks(2, 1);
    let start = Instant::now();
    let mut cases = 0u32;
    for y in 0..448 {
        for x in 0..448 {
            let q = BlockLocalPoint::new(1, x, y);
            let a = from_block_local(q, &tall).map_err(|e| e.to_string())?;
            let b = from_block_local(q, &wide).map_err(|e| e.to_string())?;
            ensure(a != b, || format!("collision at {q:?}: {a:?}"))?;
            cases += 1;
        }
    }
    ensure(cases == 200_704, || format!("{cases} cases"))?;
    within(Duration::from_secs(2), start)
}

/// Random tree given as a parent array; node `i > 0` hangs under a node with
/// a smaller index and siblings are ordered by index.
fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> (Vec<usize>, DomNode) {
    let parents: Vec<usize> = (0..n)
        .map(|i| if i == 0 { 0 } else { rng.random_range(0..i) })
        .collect();
    fn build(i: usize, parents: &[usize]) -> DomNode {
        let children = (i + 1..parents.len())
            .filter(|&c| parents[c] == i)
            .map(|c| build(c, parents))
            .collect();
        DomNode::new(format!("n{i}"), PixelBox::new(8, 8, 4, 4)).with_children(children)
    }
    let root = build(0, &parents);
    (parents, root)
}

fn preorder_labels(root: &DomNode) -> Vec<usize> {
    fn walk(n: &DomNode, out: &mut Vec<usize>) {
        out.push(n.tag[1..].parse().unwrap());
        n.children.iter().for_each(|c| walk(c, out));
    }
    let mut out = Vec::new();
    walk(root, &mut out);
    out
}

/// (label, parent label) for every node, plus child label order per node.
fn structure(root: &DomNode) -> (BTreeMap<usize, Option<usize>>, BTreeMap<usize, Vec<usize>>) {
    fn walk(
        n: &DomNode,
        parent: Option<usize>,
        nodes: &mut BTreeMap<usize, Option<usize>>,
        kids: &mut BTreeMap<usize, Vec<usize>>,
    ) {
        let me: usize = n.tag[1..].parse().unwrap();
        nodes.insert(me, parent);
        kids.insert(me, n.children.iter().map(|c| c.tag[1..].parse().unwrap()).collect());
        n.children.iter().for_each(|c| walk(c, Some(me), nodes, kids));
    }
    let (mut nodes, mut kids) = (BTreeMap::new(), BTreeMap::new());
    walk(root, None, &mut nodes, &mut kids);
    (nodes, kids)
}

fn dom_pruning_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let start = Instant::now();
    for case in 0..500 {
        let n = rng.random_range(1..=200);
        let (parents, root) = random_tree(&mut rng, n);
        let order = preorder_labels(&root);
        let density = rng.random_range(0.0..0.3);
        let marked: BTreeSet<usize> = (0..n).filter(|_| rng.random_bool(density)).collect();
        let marks: MarkSet = order
            .iter()
            .enumerate()
            .filter(|(_, l)| marked.contains(l))
            .map(|(pos, _)| NodeId(pos))
            .collect();

        let mut oracle: BTreeSet<usize> = BTreeSet::from([0]);
        for &m in &marked {
            let mut v = m;
            while oracle.insert(v) {
                v = parents[v];
            }
        }

        let pruned = prune_tree(&root, &marks);
        let (nodes, kids) = structure(&pruned.root);
        let kept: BTreeSet<usize> = nodes.keys().copied().collect();
        ensure(kept == oracle, || {
            format!("case {case}: kept {} nodes, oracle {}", kept.len(), oracle.len())
        })?;
        for (&v, &p) in &nodes {
            let expect = (v != 0).then(|| parents[v]);
            ensure(p == expect, || {
                format!("case {case}: node {v} under {p:?}, expected {expect:?}")
            })?;
        }
        for (v, c) in &kids {
            ensure(c.windows(2).all(|w| w[0] < w[1]), || {
                format!("case {case}: children of {v} reordered")
            })?;
        }

        let again = prune_tree(&pruned.root, &pruned.map_marks(&marks));
        ensure(again.root == pruned.root, || {
            format!("case {case}: pruning is not idempotent")
        })?;
    }
    within(Duration::from_secs(5), start)
}

fn packing_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let start = Instant::now();
    for case in 0..1000 {
        let budget = rng.random_range(10..=4096);
        let overhead = rng.random_range(0..budget / 2);
        let n = rng.random_range(0..=300);
        let costs: Vec<usize> = (0..n).map(|_| rng.random_range(1..=budget)).collect();
        let p = pack_costs(&costs, budget, overhead);
        for bin in &p.bins {
            let used = overhead + bin.iter().map(|&i| costs[i]).sum::<usize>();
            ensure(!bin.is_empty() && used <= budget, || {
                format!("case {case}: sample costs {used} > {budget}")
            })?;
        }
        let kept: Vec<usize> = p.bins.iter().flatten().copied().collect();
        ensure(kept.windows(2).all(|w| w[0] < w[1]), || {
            format!("case {case}: order broken")
        })?;
        ensure(kept.len() + p.dropped.len() == n, || {
            format!("case {case}: {} kept + {} dropped != {n}", kept.len(), p.dropped.len())
        })?;
        let all: BTreeSet<usize> = kept.iter().chain(&p.dropped).copied().collect();
        ensure(all.len() == n, || format!("case {case}: pairs duplicated or lost"))?;
        for &d in &p.dropped {
            ensure(overhead + costs[d] > budget, || {
                format!("case {case}: pair {d} dropped but fits")
            })?;
        }
    }
    within(Duration::from_secs(1), start)
}

/// Synthetic action used by the brute-force matcher; independent of the
/// library's action type.
#[derive(Debug, Clone)]
enum Synth {
    Tap(u32, u32),
    Scroll(&'static str),
    Type(String),
    Key(&'static str),
}

impl Synth {
    fn code(&self) -> String {
        match self {
            Synth::Tap(x, y) => format!("CLICK({x}, {y})"),
            Synth::Scroll(d) => format!("SCROLL({d})"),
            Synth::Type(t) => format!("INPUT('{t}')"),
            Synth::Key(k) => k.to_string(),
        }
    }
}

fn brute_match(gold: &Synth, pred: &Synth, gold_box: Option<[u32; 4]>, screen: (u32, u32)) -> bool {
    const EPS: f64 = 1e-12;
    match (gold, pred) {
        (Synth::Tap(gx, gy), Synth::Tap(px, py)) => {
            let dx = (*gx as f64 - *px as f64) / screen.0 as f64;
            let dy = (*gy as f64 - *py as f64) / screen.1 as f64;
            if (dx * dx + dy * dy).sqrt() <= 0.14 + EPS {
                return true;
            }
            let Some([cx, cy, w, h]) = gold_box else { return false };
            let k = 2.4f64.sqrt();
            let inside = |x: u32, y: u32| {
                (x as f64 - cx as f64).abs() <= k * w as f64 / 2.0 + EPS
                    && (y as f64 - cy as f64).abs() <= k * h as f64 / 2.0 + EPS
            };
            inside(*gx, *gy) && inside(*px, *py)
        }
        (Synth::Scroll(a), Synth::Scroll(b)) => {
            let vertical = |d: &str| d == "up" || d == "down";
            vertical(a) == vertical(b)
        }
        (Synth::Type(a), Synth::Type(b)) => a.trim().to_lowercase() == b.trim().to_lowercase(),
        (Synth::Key(a), Synth::Key(b)) => a == b,
        _ => false,
    }
}

fn random_synth(rng: &mut ChaCha8Rng, screen: (u32, u32), near: Option<&Synth>) -> Synth {
    const DIRS: [&str; 4] = ["up", "down", "left", "right"];
    const KEYS: [&str; 3] = ["PRESS_BACK", "PRESS_HOME", "TASK_COMPLETE"];
    const WORDS: [&str; 4] = ["pizza", "Pizza ", "coffee", "bus"];
    if let (Some(Synth::Tap(x, y)), true) = (near, rng.random_bool(0.8)) {
        let spread = rng.random_range(1..=(screen.0.max(screen.1) / 4) as i64);
        let jitter = |v: u32, max: u32, rng: &mut ChaCha8Rng| {
            (v as i64 + rng.random_range(-spread..=spread)).clamp(0, max as i64 - 1) as u32
        };
        return Synth::Tap(jitter(*x, screen.0, rng), jitter(*y, screen.1, rng));
    }
    match rng.random_range(0..10) {
        0..=5 => Synth::Tap(rng.random_range(0..screen.0), rng.random_range(0..screen.1)),
        6 => Synth::Scroll(DIRS[rng.random_range(0..4)]),
        7 | 8 => Synth::Type(WORDS[rng.random_range(0..4)].to_string()),
        _ => Synth::Key(KEYS[rng.random_range(0..3)]),
    }
}

fn record(gold: &Synth, pred: &Synth, gold_box: Option<[u32; 4]>, screen: (u32, u32)) -> Result<StepRecord, String> {
    let space = default_spaces().get("mobile").cloned().ok_or("no mobile space")?;
    let parse = |s: &Synth| parse_action(&s.code(), &space).map_err(|e| format!("{}: {e}", s.code()));
    Ok(StepRecord {
        id: "r".into(),
        gold: parse(gold)?,
        gold_box: gold_box.map(PixelBox::from),
        pred: Some(parse(pred)?),
        screen: Extent::new(screen.0, screen.1),
    })
}

fn ams_oracle_equivalence() -> Check {
    let boundary = [(Synth::Tap(590, 590), true), (Synth::Tap(600, 600), false)];
    for (pred, expect) in &boundary {
        let gold = Synth::Tap(500, 500);
        let b = Some([500, 500, 10, 10]);
        let rec = record(&gold, pred, b, (1000, 1000))?;
        ensure(action_match(&rec) == *expect, || {
            format!("{pred:?} should match={expect}")
        })?;
        ensure(brute_match(&gold, pred, b, (1000, 1000)) == *expect, || {
            format!("oracle disagrees on {pred:?}")
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut matches, mut box_only) = (0, 0);
    for case in 0..1000 {
        let screen = (rng.random_range(200..=2000), rng.random_range(200..=3200));
        let gold = random_synth(&mut rng, screen, None);
        let pred = random_synth(&mut rng, screen, Some(&gold));
        let gold_box = match gold {
            Synth::Tap(x, y) if rng.random_bool(0.7) => {
                let w = rng.random_range(2..=400);
                let h = rng.random_range(2..=400);
                let cx = (x as i64 + rng.random_range(-(w as i64) / 2..=w as i64 / 2)).max(0) as u32;
                let cy = (y as i64 + rng.random_range(-(h as i64) / 2..=h as i64 / 2)).max(0) as u32;
                Some([cx, cy, w, h])
            }
            _ => None,
        };
        let rec = record(&gold, &pred, gold_box, screen)?;
        let (got, want) = (action_match(&rec), brute_match(&gold, &pred, gold_box, screen));
        ensure(got == want, || {
            format!("case {case}: gold {gold:?} pred {pred:?} box {gold_box:?} screen {screen:?}: {got} vs {want}")
        })?;
        matches += usize::from(want);
        if want && gold_box.is_some() && !brute_match(&gold, &pred, None, screen) {
            box_only += 1;
        }
    }
    // The random set must exercise both outcomes and the enlarged-box path.
    ensure(matches > 100 && matches < 900 && box_only > 10, || {
        format!("weak coverage: {matches} matches, {box_only} via the box alone")
    })
}

fn op_f1_checks() -> Check {
    let cases = [
        ("click button", "click the button", 0.8),
        ("click the button", "click the button", 1.0),
        ("scroll down", "input hello", 0.0),
    ];
    for (p, g, want) in cases {
        let got = op_f1(p, g);
        ensure((got - want).abs() <= 1e-9, || {
            format!("op_f1({p:?}, {g:?}) = {got}, want {want}")
        })?;
    }
    Ok(())
}

fn golden(name: &str) -> Result<String, String> {
    let path = fixtures().join("golden").join(name);
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(text.strip_suffix('\n').unwrap_or(&text).to_string())
}

fn same(name: &str, got: &str) -> Check {
    let want = golden(name)?;
    ensure(got == want, || {
        format!("{name} differs:\n--- got\n{got}\n--- want\n{want}")
    })
}

fn golden_prompts() -> Check {
    let text = std::fs::read_to_string(fixtures().join("trajectories.jsonl")).map_err(|e| e.to_string())?;
    let steps: Vec<TrajectoryStep> = text
        .lines()
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let step = |key: &str| steps.iter().find(|s| s.key() == key).ok_or(format!("no step {key}"));
    let e = |e: guikit::navdata::NavError| e.to_string();
    same("middle_t1_0.txt", &build_middle_prompt(step("t1:0")?).map_err(e)?)?;
    same("middle_t2_1.txt", &build_middle_prompt(step("t2:1")?).map_err(e)?)?;
    same("final_t2_4.txt", &build_final_prompt(step("t2:4")?).map_err(e)?)?;

    let snap = load_snapshot("02-travel.json")?;
    let input = describe_input(&snap, NodeId(9), None).map_err(|(c, m)| format!("{c}: {m}"))?;
    ensure(input.text == "Read more" && input.region == "top-left corner", || {
        format!("{input:?}")
    })?;
    same(
        "describe_travel_read_more.txt",
        &build_describe_prompt(&input.text, input.region, &input.context),
    )?;
    same(
        "refine_lisbon.txt",
        &build_refine_prompt("Opens the full article about spending a weekend in Lisbon."),
    )
}

fn load_snapshot(name: &str) -> Result<Snapshot, String> {
    let path = fixtures().join("snapshots").join(name);
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_guikit"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("guikit {args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })?;
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Centers, in source pixels, of every element and icon per visible label.
fn label_centers(s: &Snapshot) -> BTreeMap<String, Vec<(u32, u32)>> {
    fn walk(n: &DomNode, out: &mut BTreeMap<String, Vec<(u32, u32)>>) {
        if let Some(t) = &n.text {
            let t = t.split_whitespace().collect::<Vec<_>>().join(" ");
            out.entry(t).or_default().push((n.bbox.cx, n.bbox.cy));
        }
        n.children.iter().for_each(|c| walk(c, out));
    }
    let mut out = BTreeMap::new();
    walk(&s.dom, &mut out);
    for icon in &s.icons {
        out.entry(icon.caption.clone())
            .or_default()
            .push((icon.bbox.cx, icon.bbox.cy));
    }
    out
}

fn end_to_end_fixture_run() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = fixtures().join("snapshots");
    let input = input.to_str().ok_or("non-utf8 path")?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let start = Instant::now();
    run_cli(&[
        "gen-level1",
        "--input",
        input,
        "--output",
        a.to_str().unwrap(),
        "--seed",
        "5",
        "--workers",
        "1",
    ])?;
    run_cli(&[
        "gen-level1",
        "--input",
        input,
        "--output",
        b.to_str().unwrap(),
        "--seed",
        "5",
        "--workers",
        "4",
    ])?;
    let first = std::fs::read(a.join("level1.jsonl")).map_err(|e| e.to_string())?;
    let second = std::fs::read(b.join("level1.jsonl")).map_err(|e| e.to_string())?;
    ensure(first == second, || {
        "rerun with the same seed is not byte-identical".into()
    })?;

    let mut snaps = BTreeMap::new();
    for entry in std::fs::read_dir(fixtures().join("snapshots")).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().is_some_and(|x| x == "json") {
            let s = load_snapshot(path.file_name().unwrap().to_str().unwrap())?;
            snaps.insert(s.id.clone(), s);
        }
    }
    ensure(snaps.len() == 10, || format!("{} fixture snapshots", snaps.len()))?;

    let mut checked = 0usize;
    let mut seen_snaps = BTreeSet::new();
    for line in String::from_utf8(first).map_err(|e| e.to_string())?.lines() {
        let sample: TrainingSample = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let (items, targets) = match sample.task {
            Task::Text2Bbox | Task::Bbox2Text => {
                let (p, t, _) = split_list_sample(&sample).ok_or("unparseable list sample")?;
                (p, t)
            }
            _ => continue,
        };
        let snap = snaps.get(&sample.snapshot_id).ok_or("unknown snapshot id")?;
        seen_snaps.insert(sample.snapshot_id.clone());
        let centers = label_centers(snap);
        let (gw, gh) = (sample.grid.extent().w as f64, sample.grid.extent().h as f64);
        let (vw, vh) = (snap.viewport_w as f64, snap.viewport_h as f64);
        for (item, target) in items.iter().zip(&targets) {
            let (text, bbox) = if sample.task == Task::Text2Bbox {
                (item, target)
            } else {
                (target, item)
            };
            let label = text.split(" (near: ").next().unwrap_or(text);
            let values = parse_bbox(bbox).ok_or_else(|| format!("bad box {bbox}"))?;
            ensure(values.len() == 5, || format!("box {bbox} has no block index"))?;
            let decoded = decode_block_bbox(&values, &sample.grid).ok_or_else(|| format!("undecodable {bbox}"))?;
            let sources = centers
                .get(label)
                .ok_or_else(|| format!("{}: no element {label:?}", snap.id))?;
            let hit = sources.iter().any(|&(cx, cy)| {
                let ex = (cx as f64 * gw / vw).round() as i64;
                let ey = (cy as f64 * gh / vh).round() as i64;
                (decoded.cx as i64 - ex).abs() <= 1 && (decoded.cy as i64 - ey).abs() <= 1
            });
            ensure(hit, || {
                format!(
                    "{}: {label:?} box {bbox} decodes to {decoded:?}, off its source",
                    snap.id
                )
            })?;
            checked += 1;
        }
    }
    ensure(checked > 0 && seen_snaps.len() == snaps.len(), || {
        format!("checked {checked} boxes over {} snapshots", seen_snaps.len())
    })?;
    within(Duration::from_secs(10), start)
}

fn oracle_evaluation() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let gold_path = fixtures().join("eval_gold.jsonl");
    let text = std::fs::read_to_string(&gold_path).map_err(|e| e.to_string())?;
    let mut preds = String::new();
    let mut n = 0;
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let pred = serde_json::json!({"id": v["id"], "action": v["action"]});
        preds.push_str(&pred.to_string());
        preds.push('\n');
        n += 1;
    }
    ensure(n == 100, || format!("{n} gold steps"))?;
    let pred_path = dir.path().join("pred.jsonl");
    std::fs::write(&pred_path, preds).map_err(|e| e.to_string())?;
    let out = dir.path().join("out");
    run_cli(&[
        "eval",
        "--gold",
        gold_path.to_str().unwrap(),
        "--pred",
        pred_path.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ])?;
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("eval.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    ensure(report["steps"] == 100, || format!("steps = {}", report["steps"]))?;
    for key in ["click_acc", "ele_acc", "step_sr", "ams"] {
        ensure(report[key].as_f64() == Some(1.0), || format!("{key} = {}", report[key]))?;
    }
    Ok(())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("ubp worked example", ubp_worked_example),
        ("ubp round trip, 1e5 random cases", ubp_round_trip),
        ("ubp ambiguity witness, 448x448 exhaustive", ubp_ambiguity_witness),
        ("dom pruning vs ancestor-closure oracle", dom_pruning_oracle),
        ("packing budget, order, conservation", packing_invariants),
        ("ams vs brute-force oracle", ams_oracle_equivalence),
        ("op f1 checks", op_f1_checks),
        ("golden prompts", golden_prompts),
        ("end-to-end gen-level1 on fixtures", end_to_end_fixture_run),
        ("oracle evaluation scores 1.0", oracle_evaluation),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        match check() {
            Ok(()) => println!("PASS  {name} ({:.0?})", start.elapsed()),
            Err(e) => {
                failed += 1;
                println!("FAIL  {name}: {e}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
