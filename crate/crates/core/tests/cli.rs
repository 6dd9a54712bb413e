//! Drives the binary the way a user would.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_feedback-gym"));
    c.env_remove("FEEDBACK_GYM_CORPUS").env_remove("FEEDBACK_GYM_BIND");
    c
}

fn mock_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/mock.toml")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn unknown_subcommand_prints_usage() {
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn ingest_reports_fixture_traces() {
    let o = run(&["ingest", "--balance", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["traces_kept"], 10);
    assert_eq!(v["triplets"].as_array().unwrap().len(), 20);
    assert_eq!(v["balanced"]["problem_ids"].as_array().unwrap().len(), 5);
}

#[test]
fn evaluate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        let o = run(&[
            "evaluate", "--corpus", "fixtures", "--editor", "mock-faithful", "--n", "1", "--seed", "7", "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let first = std::fs::read(&a).unwrap();
    assert_eq!(first, std::fs::read(&b).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(v["pass_at_1"], 100.0);
}

#[test]
fn labeled_evaluation_of_skewed_editor() {
    let o = run(&["evaluate", "--editor", "mock-skewed", "--labeled"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["metrics"]["classification"]["false_positive_rate"], 1.0);
    assert!(v["metrics"]["correlation"]["pearson"].is_null());
}

#[test]
fn audit_prints_table_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("audit.jsonl");
    let o = run(&["audit", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.starts_with("suite\tn\tmean"));
    assert_eq!(table.lines().count(), 6);
    let reports = std::fs::read_to_string(out).unwrap();
    assert_eq!(reports.lines().count(), 5);
    assert!(reports.lines().all(|l| l.contains("\"valid\":true")));
}

#[test]
fn reward_ranked_pairs_are_byte_identical_per_seed() {
    let cfg = mock_config();
    let go = || {
        let o = run(&["--config", cfg.to_str().unwrap(), "--seed", "3", "pairs", "--strategy", "reward-ranked", "--feedback-model", "sampler"]);
        assert!(o.status.success(), "{}", stderr(&o));
        o.stdout
    };
    let first = go();
    assert!(!first.is_empty());
    assert_eq!(first, go());
}

#[test]
fn editor_corpus_phases() {
    for (phase, prefixed) in [("1", true), ("2", false)] {
        let o = run(&["pairs", "--strategy", "editor", "--phase", phase]);
        assert!(o.status.success(), "{}", stderr(&o));
        for line in stdout(&o).lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            let target = v["target"].as_str().unwrap();
            assert_eq!(target.starts_with("[Correct]") || target.starts_with("[Wrong]"), prefixed);
        }
    }
    let o = run(&["pairs", "--strategy", "editor", "--phase", "3"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn score_from_request_file() {
    let dir = tempfile::tempdir().unwrap();
    let reqs = dir.path().join("reqs.jsonl");
    let wrong = "a, b = map(int, input().split())\\nprint(a - b)\\n";
    std::fs::write(
        &reqs,
        format!(
            "{{\"problem_id\":\"sum-two\",\"wrong_code\":\"{wrong}\",\"feedback\":\"Add, do not subtract. [polarity:correct]\",\"editor\":\"mock-faithful\"}}\n\
             {{\"problem_id\":\"sum-two\",\"wrong_code\":\"{wrong}\",\"feedback\":\"Fine. [polarity:wrong]\",\"editor\":\"mock-faithful\"}}\n"
        ),
    )
    .unwrap();
    let o = run(&["score", "--requests", reqs.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["score"], 1.0);
    assert_eq!(lines[1]["score"], 0.0);
    assert!(!stdout(&o).contains("latency"));
}

#[test]
fn testgen_with_canned_annotator() {
    let cfg = mock_config();
    let o = run(&["--config", cfg.to_str().unwrap(), "testgen", "--annotator", "sum-inputs", "--problem", "sum-two"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["test_cases"].as_array().unwrap().len(), 6);
    assert_eq!(v["provenance"]["generator_model"], "sum-inputs");
}

#[test]
fn overlap_between_directories() {
    let dir = tempfile::tempdir().unwrap();
    let (cand, refs) = (dir.path().join("cand"), dir.path().join("refs"));
    std::fs::create_dir_all(&cand).unwrap();
    std::fs::create_dir_all(&refs).unwrap();
    std::fs::write(cand.join("a.py"), "x = 1\n# note\nprint(x)\n").unwrap();
    std::fs::write(cand.join("b.py"), "\n\n").unwrap();
    std::fs::write(refs.join("r.py"), "  x = 1\ny = 2\n").unwrap();
    let o = run(&["overlap", "--candidate", cand.to_str().unwrap(), "--reference", refs.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["documents"][0]["absolute_overlap"], 1);
    assert_eq!(v["documents"][0]["total_lines"], 2);
    assert_eq!(v["excluded_empty"][0], "b.py");
}

#[test]
fn failures_carry_a_category() {
    let o = run(&["audit", "--suite", "/nonexistent/suites.jsonl"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).starts_with("error[input]"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[service]\nmax_in_flight = 0\n").unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "ingest"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error[config]"));

    let o = run(&["score", "--problem", "nope", "--wrong-code", "/dev/null", "--feedback", "x"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}
