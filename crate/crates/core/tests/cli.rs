use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn guikit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_guikit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = guikit(args);
    assert!(
        out.status.success(),
        "guikit {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn script(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    format!("sh {}", path.display())
}

fn snapshots() -> String {
    fixtures().join("snapshots").to_str().unwrap().to_string()
}

#[test]
fn validate_accepts_fixtures() {
    let out = ok(&["collect-validate", "--input", &snapshots()]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("snapshots=10"));
}

#[test]
fn validate_rejects_missing_viewport() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixtures().join("snapshots/00-news.json")).unwrap();
    let mut snap: Value = serde_json::from_str(&text).unwrap();
    snap.as_object_mut().unwrap().remove("viewport_w");
    std::fs::write(dir.path().join("bad.json"), snap.to_string()).unwrap();
    let out = guikit(&["collect-validate", "--input", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("viewport_w"));
}

#[test]
fn schema_error_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    std::fs::write(input.join("a.json"), "{\"id\": \"a\"}").unwrap();
    let output = dir.path().join("out");
    let out = guikit(&["gen-level1", "--input", p(&input), "--output", p(&output)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!output.exists());
}

#[test]
fn level1_respects_language_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, de) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("de"));
    ok(&["gen-level1", "--input", &snapshots(), "--output", p(&a), "--seed", "1"]);
    ok(&["gen-level1", "--input", &snapshots(), "--output", p(&b), "--seed", "2"]);
    let (sa, sb) = (lines(&a.join("level1.jsonl")), lines(&b.join("level1.jsonl")));
    assert_eq!(sa.len(), sb.len());
    assert_ne!(sa, sb, "instruction choice should follow the seed");

    let out = ok(&[
        "gen-level1",
        "--input",
        &snapshots(),
        "--output",
        p(&de),
        "--language",
        "de",
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("snapshots=1 "));
    assert!(lines(&de.join("level1.jsonl"))
        .iter()
        .all(|s| s["snapshot_id"] == "07-weather"));
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        format!(
            "input = {:?}\noutput = {:?}\ntoken_budget = 200\n",
            snapshots(),
            p(&out_dir)
        ),
    )
    .unwrap();
    ok(&["gen-level1", "--config", p(&cfg), "--workers", "2"]);
    for s in lines(&out_dir.join("level1.jsonl")) {
        if s["task"] != "bbox2dom" {
            assert!(s["est_tokens"].as_u64().unwrap() <= 200);
        }
    }

    std::fs::write(&cfg, "tokens = 3\n").unwrap();
    let out = guikit(&["gen-level1", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));
}

#[test]
fn level2_with_mock_clients() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "gen-level2",
        "--input",
        &snapshots(),
        "--output",
        p(dir.path()),
        "--mock-clients",
    ]);
    let functions = lines(&dir.path().join("level2.functions.jsonl"));
    assert!(functions.len() > 50);
    assert!(functions
        .iter()
        .all(|f| f["function"].as_str().unwrap().starts_with("to ")));
    let samples = lines(&dir.path().join("level2.jsonl"));
    assert_eq!(samples.len(), 10);
    // Function boxes carry no block index.
    let target = samples[0]["target"].as_str().unwrap();
    let first = target.lines().next().unwrap();
    assert_eq!(first.matches(',').count(), 3, "{first}");
}

#[test]
fn level2_external_clients_and_quarantine() {
    let dir = tempfile::tempdir().unwrap();
    let describe = script(
        dir.path(),
        "describe.sh",
        "cat > /dev/null\nprintf 'Thinking.\\nThe purpose is \"Opens the linked page.\".\\n'\n",
    );
    // Refuses to answer with a "to" phrase for one label only.
    let refine = script(
        dir.path(),
        "refine.sh",
        "req=$(cat)\ncase \"$req\" in *Contact*) echo 'Contact page';; *) echo 'to open the page';; esac\n",
    );
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    for name in ["00-news.json", "00-news.png"] {
        std::fs::copy(fixtures().join("snapshots").join(name), input.join(name)).unwrap();
    }
    let out_dir = dir.path().join("out");
    ok(&[
        "gen-level2",
        "--input",
        p(&input),
        "--output",
        p(&out_dir),
        "--describe-command",
        &describe,
        "--refine-command",
        &refine,
        "--retries",
        "0",
    ]);
    let functions = lines(&out_dir.join("level2.functions.jsonl"));
    assert!(!functions.is_empty());
    assert!(functions.iter().all(|f| f["function"] == "to open the page"));

    let describe = script(
        dir.path(),
        "describe2.sh",
        "req=$(cat)\ncase \"$req\" in *\"the 'Contact' on\"*) echo 'The purpose is \"Contact us\".';; *) echo 'The purpose is \"x\".';; esac\n",
    );
    let out_dir = dir.path().join("out2");
    ok(&[
        "gen-level2",
        "--input",
        p(&input),
        "--output",
        p(&out_dir),
        "--describe-command",
        &describe,
        "--refine-command",
        &refine,
        "--retries",
        "0",
    ]);
    let quarantined = lines(&out_dir.join("level2.quarantine.jsonl"));
    assert_eq!(quarantined.len(), 1, "{quarantined:?}");
    assert_eq!(quarantined[0]["code"], "not_to_phrase");
}

#[test]
fn level2_requires_clients() {
    let dir = tempfile::tempdir().unwrap();
    let out = guikit(&["gen-level2", "--input", &snapshots(), "--output", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("describe_command"));
}

const JUDGE: &str = r#"req=$(cat)
case "$req" in
  *'"step_kind":"final"'*)
    if printf '%s' "$req" | grep -q '2. PRESS_HOME'; then ans=False; else ans=True; fi
    printf '1. Final screen.\n2. Checked.\n3. %s\n' "$ans";;
  *"The Current Action: INPUT"*)
    printf '1. Search page.\n2. The function of the Current Action: "type a query"\n3. Not needed yet.\n4. False\n5. No.\n6. False\n';;
  *"The Current Action: PRESS_BACK"*)
    echo 'I cannot tell.';;
  *)
    printf '1. Some screen.\n2. The function of the Current Action: "move ahead"\n3. Fine.\n4. True\n5. No.\n6. False\n';;
esac
"#;

#[test]
fn level3_with_scripted_judge() {
    let dir = tempfile::tempdir().unwrap();
    let judge = script(dir.path(), "judge.sh", JUDGE);
    let input = fixtures().join("trajectories.jsonl");
    let out = dir.path().join("out");
    ok(&[
        "gen-level3",
        "--input",
        p(&input),
        "--output",
        p(&out),
        "--judge-command",
        &judge,
        "--retries",
        "0",
    ]);
    let kept = lines(&out.join("level3.cleaned.jsonl"));
    let rejected = lines(&out.join("level3.rejected.jsonl"));
    let quarantined = lines(&out.join("level3.quarantine.jsonl"));
    assert_eq!((kept.len(), rejected.len(), quarantined.len()), (11, 2, 1));
    let reasons: Vec<&str> = rejected.iter().map(|r| r["reason"].as_str().unwrap()).collect();
    assert_eq!(reasons, ["irrational", "incomplete"]);

    let samples = lines(&out.join("level3.jsonl"));
    assert_eq!(samples.len(), 11);
    let t3 = samples.iter().find(|s| s["snapshot_id"] == "t3:0").unwrap();
    // 720x1600 maps onto a 2x4 grid of 448px blocks.
    assert_eq!(t3["grid"], serde_json::json!([2, 4]));
    assert!(t3["target"].as_str().unwrap().starts_with("move ahead\nCLICK("));
    let t2 = samples.iter().find(|s| s["snapshot_id"] == "t2:2").unwrap();
    assert!(t2["prompt"]
        .as_str()
        .unwrap()
        .contains("1. focus the search box\n2. type the query\n"));
}

#[test]
fn level3_with_mock_judge_keeps_everything() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixtures().join("trajectories.jsonl");
    ok(&[
        "gen-level3",
        "--input",
        p(&input),
        "--output",
        p(dir.path()),
        "--mock-clients",
    ]);
    assert_eq!(lines(&dir.path().join("level3.cleaned.jsonl")).len(), 14);
    // One function2bbox sample per clicked screen.
    assert_eq!(lines(&dir.path().join("level3.function2bbox.jsonl")).len(), 6);
}

#[test]
fn level3_rejects_broken_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixtures().join("trajectories.jsonl")).unwrap();
    let mut steps: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    // A middle step without a next screenshot makes two final steps.
    steps[0].as_object_mut().unwrap().remove("next_screenshot_ref");
    let body: String = steps.iter().map(|s| format!("{s}\n")).collect();
    let input = dir.path().join("t.jsonl");
    std::fs::write(&input, body).unwrap();
    let out = guikit(&[
        "gen-level3",
        "--input",
        p(&input),
        "--output",
        p(&dir.path().join("out")),
        "--mock-clients",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pack_respects_budget() {
    let dir = tempfile::tempdir().unwrap();
    let l1 = dir.path().join("l1");
    ok(&["gen-level1", "--input", &snapshots(), "--output", p(&l1)]);
    let packed = dir.path().join("packed");
    ok(&[
        "pack",
        "--input",
        p(&l1.join("level1.jsonl")),
        "--output",
        p(&packed),
        "--token-budget",
        "300",
    ]);
    let before = lines(&l1.join("level1.jsonl"));
    let after = lines(&packed.join("packed.jsonl"));
    assert!(after.len() > before.len());
    assert!(after.iter().all(|s| s["est_tokens"].as_u64().unwrap() <= 300));
    let items = |v: &[Value], task: &str| -> usize {
        v.iter()
            .filter(|s| s["task"] == task)
            .map(|s| s["target"].as_str().unwrap().lines().count())
            .sum()
    };
    assert_eq!(items(&before, "text2bbox"), items(&after, "text2bbox"));
    assert_eq!(items(&before, "bbox2text"), items(&after, "bbox2text"));
}

#[test]
fn eval_table_and_partial_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let gold = fixtures().join("eval_gold.jsonl");
    // Predict only the first half, verbatim.
    let preds: String = std::fs::read_to_string(&gold)
        .unwrap()
        .lines()
        .take(50)
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            format!("{}\n", serde_json::json!({"id": v["id"], "action": v["action"]}))
        })
        .collect();
    let pred = dir.path().join("pred.jsonl");
    std::fs::write(&pred, preds).unwrap();
    let out = ok(&["eval", "--gold", p(&gold), "--pred", p(&pred)]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("AMS"));
    assert!(table.contains("Step SR       50.00"), "{table}");
    assert!(table.contains("steps: 100"));
}

#[test]
fn eval_rejects_gold_outside_action_space() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.jsonl");
    std::fs::write(&gold, "{\"id\":\"a\",\"action\":\"HOVER(1, 2)\",\"screen\":[10,10]}\n").unwrap();
    let pred = dir.path().join("pred.jsonl");
    std::fs::write(&pred, "").unwrap();
    let out = guikit(&["eval", "--gold", p(&gold), "--pred", p(&pred)]);
    assert_eq!(out.status.code(), Some(2));
    let out = ok(&["eval", "--gold", p(&gold), "--pred", p(&pred), "--action-space", "web"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("steps: 1"));
}
