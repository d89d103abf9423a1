use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn consilium(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_consilium"))
        .args(args)
        .current_dir(workspace())
        .env_remove("CONSILIUM_API_KEY")
        .env_remove("CONSILIUM_ENDPOINT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.path().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}

fn fixture_runs() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&workspace().join("fixtures/runs"), dir.path());
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn backends_are_mutually_exclusive() {
    let out = consilium(&[
        "run",
        "--case",
        "case1",
        "--pipeline",
        "pure",
        "--model",
        "m",
        "--endpoint",
        "http://localhost:1",
        "--replay",
        "x.jsonl",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let out = consilium(&["run", "--case", "case1", "--pipeline", "pure", "--model", "m"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn all_cases_with_scripted_replies_stores_one_run_per_case() {
    let runs = tempfile::tempdir().unwrap();
    let scripts = tempfile::tempdir().unwrap();
    let fixtures = workspace().join("fixtures/scripts");
    for case_id in ["case1", "case2", "case3"] {
        std::fs::copy(
            fixtures.join(format!("{case_id}-multi-qwen2.5.json")),
            scripts.path().join(format!("{case_id}.json")),
        )
        .unwrap();
    }
    std::fs::copy(fixtures.join("case4-multi-mistral-small.json"), scripts.path().join("case4.json")).unwrap();
    let out = consilium(&[
        "run",
        "--all-cases",
        "--pipeline",
        "multi_agent",
        "--model",
        "qwen2.5",
        "--scripted",
        s(scripts.path()),
        "--out",
        s(runs.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut ids: Vec<String> =
        std::fs::read_dir(runs.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    ids.sort();
    assert_eq!(ids, ["case1-multi-qwen2.5", "case2-multi-qwen2.5", "case3-multi-qwen2.5", "case4-multi-qwen2.5"]);
    for id in &ids[..3] {
        let ours = std::fs::read(runs.path().join(id).join("plan_revised.json")).unwrap();
        let fixture = std::fs::read(workspace().join("fixtures/runs").join(id).join("plan_revised.json")).unwrap();
        assert_eq!(ours, fixture, "{id}");
    }

    let out = consilium(&["list", "--runs-dir", s(runs.path())]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).matches("recorded").count(), 4, "{}", stdout(&out));
}

#[test]
fn replay_reproduces_and_detects_drift() {
    let runs = tempfile::tempdir().unwrap();
    let transcript = workspace().join("fixtures/runs/case3-multi-qwen2.5/transcript.jsonl");
    let out = consilium(&[
        "run",
        "--case",
        "case3",
        "--pipeline",
        "multi_agent",
        "--replay",
        s(&transcript),
        "--out",
        s(runs.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let ours = std::fs::read(runs.path().join("case3-multi-qwen2.5/plan_revised.json")).unwrap();
    let fixture = std::fs::read(workspace().join("fixtures/runs/case3-multi-qwen2.5/plan_revised.json")).unwrap();
    assert_eq!(ours, fixture);

    let out = consilium(&[
        "run",
        "--case",
        "case3",
        "--pipeline",
        "multi_agent",
        "--max-rounds",
        "2",
        "--replay",
        s(&transcript),
        "--out",
        s(runs.path()),
        "--run-id",
        "drifted",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("drift report"), "{}", stderr(&out));
    assert!(!runs.path().join("drifted").exists());
}

#[test]
fn eval_is_idempotent() {
    let runs = fixture_runs();
    let metrics = runs.path().join("case2-multi-qwen2.5/metrics.json");
    let before = std::fs::read(&metrics).unwrap();
    for _ in 0..2 {
        let out = consilium(&["eval", "--run", "case2-multi-qwen2.5", "--runs-dir", s(runs.path())]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(stdout(&out).contains("correctness             5/5"), "{}", stdout(&out));
        assert_eq!(std::fs::read(&metrics).unwrap(), before);
    }

    let file = workspace().join("fixtures/classifications/case2-multi-qwen2.5.json");
    let out = consilium(&[
        "eval",
        "--run",
        "case2-multi-qwen2.5",
        "--runs-dir",
        s(runs.path()),
        "--classifications",
        s(&file),
        "--adjudicator",
        "adjudicator-1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(std::fs::read(&metrics).unwrap(), before);
}

#[test]
fn incomplete_classification_is_an_error_unless_partial_is_allowed() {
    let runs = fixture_runs();
    let run = runs.path().join("case3-pure-qwen2.5");
    std::fs::remove_file(run.join("classifications.json")).unwrap();
    std::fs::remove_file(run.join("metrics.json")).unwrap();
    let partial = runs.path().join("partial.json");
    std::fs::write(&partial, r#"[{"target": {"gold": "c2"}, "label": "exact_match"}]"#).unwrap();

    let args = ["eval", "--run", s(&run), "--classifications", s(&partial), "--adjudicator", "a"];
    let out = consilium(&args);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("c1, c3, c4, c5"), "{}", stderr(&out));
    assert!(run.join("classifications.json").exists());
    assert!(!run.join("metrics.json").exists());

    let mut with_partial = args.to_vec();
    with_partial.push("--allow-partial");
    let out = consilium(&with_partial);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("provisional; unclassified: c1, c3, c4, c5"), "{}", stdout(&out));
    assert!(!run.join("metrics.json").exists());
}

#[test]
fn report_matches_the_golden_table() {
    let out = consilium(&["report", "--runs-dir", "fixtures/runs"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let golden = std::fs::read_to_string(workspace().join("fixtures/report_table.txt")).unwrap();
    assert_eq!(stdout(&out), golden);

    let out = consilium(&["report", "--runs-dir", "fixtures/runs", "--format", "radar-json"]);
    let radar: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let golden: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(workspace().join("fixtures/radar.json")).unwrap()).unwrap();
    assert_eq!(radar, golden);
}

#[test]
fn rate_prints_summaries_and_pending_consensus() {
    let runs = fixture_runs();
    let ratings = runs.path().join("ratings.json");
    std::fs::write(
        &ratings,
        r#"[{"rater": "r1", "dimension": "efficiency", "score": 1},
            {"rater": "r2", "dimension": "efficiency", "score": 4}]"#,
    )
    .unwrap();
    let out =
        consilium(&["rate", "--run", "case1-pure-qwen2.5", "--runs-dir", s(runs.path()), "--ratings", s(&ratings)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("2.50 ± 2.12 (n=2)"), "{}", stdout(&out));
    assert!(stdout(&out).contains("consensus needed: efficiency"), "{}", stdout(&out));
}
