use std::path::{Path, PathBuf};
use std::process::Command;

use revqa::cli::{run, EXIT_DISCLAIMED, EXIT_ERROR, EXIT_OK};

fn fixture(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(rel)
        .to_string_lossy()
        .into_owned()
}

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn revqa(args: &[&str]) -> Out {
    let mut argv = vec!["revqa"];
    argv.extend_from_slice(args);
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let code = run(argv, &mut o, &mut e);
    Out {
        code,
        stdout: String::from_utf8(o).unwrap(),
        stderr: String::from_utf8(e).unwrap(),
    }
}

fn tmp(dir: &tempfile::TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

#[test]
fn ask_scenario_answers() {
    let r = revqa(&["ask", "--scenario", &fixture("scenarios/olympics.json")]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let mut lines = r.stdout.lines();
    assert_eq!(lines.next(), Some("California"));
    let counters = lines.next().unwrap();
    assert!(counters.contains("local_backtracks=1"), "{counters}");
    assert!(counters.contains("global_rollbacks=1"), "{counters}");
    assert!(r.stderr.is_empty());
}

#[test]
fn ask_disclaims_with_exit_two() {
    let r = revqa(&["ask", "--scenario", &fixture("scenarios/permanent_contradiction.json")]);
    assert_eq!(r.code, EXIT_DISCLAIMED);
    assert_eq!(r.stdout.lines().next(), Some("DISCLAIMED"));
}

#[test]
fn ask_puzzle() {
    let r = revqa(&["ask", "--scenario", &fixture("scenarios/puzzle.json")]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert_eq!(r.stdout.lines().next(), Some("B"));
    assert!(r.stdout.contains("rolled_back=A,C,D"));
}

#[test]
fn ask_missing_config_is_an_error() {
    let r = revqa(&[
        "ask",
        "--scenario",
        &fixture("scenarios/olympics.json"),
        "--config",
        "/definitely/not/here.json",
    ]);
    assert_eq!(r.code, EXIT_ERROR);
    assert!(r.stdout.is_empty());
    assert!(r.stderr.contains("not/here.json"), "{}", r.stderr);
}

#[test]
fn ask_needs_a_source() {
    let r = revqa(&["ask", "--question", "Who?"]);
    assert_eq!(r.code, EXIT_ERROR);
    assert!(r.stderr.contains("--corpus"));
    let r = revqa(&["ask", "--corpus", &fixture("corpus/mini.ndjson")]);
    assert_eq!(r.code, EXIT_ERROR);
}

#[test]
fn ask_over_corpus() {
    let r = revqa(&[
        "ask",
        "--corpus",
        &fixture("corpus/mini.ndjson"),
        "--config",
        &fixture("corpus/mini_config.json"),
        "--question",
        "Which state hosted the 1984 Summer Olympics, and is its capital smaller than its largest city?",
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert_eq!(r.stdout.lines().next(), Some("California"));
}

#[test]
fn ask_unscripted_question_fails() {
    let r = revqa(&[
        "ask",
        "--corpus",
        &fixture("corpus/mini.ndjson"),
        "--config",
        &fixture("corpus/mini_config.json"),
        "--question",
        "Something nobody scripted?",
    ]);
    assert_eq!(r.code, EXIT_ERROR);
    assert!(r.stderr.contains("decomposer"), "{}", r.stderr);
}

#[test]
fn trace_and_log_then_replay_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, log) = (tmp(&dir, "trace.json"), tmp(&dir, "run.ndjson"));
    let r = revqa(&[
        "ask",
        "--scenario",
        &fixture("scenarios/olympics.json"),
        "--trace-out",
        &trace,
        "--log-out",
        &log,
    ]);
    assert_eq!(r.code, EXIT_OK);

    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(t["answer"], "California");
    assert_eq!(t["counters"]["global_rollbacks"], 1);

    let r = revqa(&["replay", "--log", &log]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert!(r.stdout.contains("final answer: California (answered)"));
    assert!(r.stdout.contains("california | capital | sacramento"));
    assert!(!r.stdout.contains("1500000"), "retracted population must not be live");

    let r = revqa(&["inspect", "--log", &log, "--filter", "rollback"]);
    assert_eq!(r.code, EXIT_OK);
    let lines: Vec<&str> = r.stdout.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| l.contains(" rollback ") && l.contains("t=")));
    assert!(lines[1].contains("GLOBAL"));

    let all = revqa(&["inspect", "--log", &log]);
    let n = std::fs::read_to_string(&log).unwrap().lines().count();
    assert_eq!(all.stdout.lines().count(), n);

    let r = revqa(&["inspect", "--log", &log, "--filter", "nonsense"]);
    assert_eq!(r.code, EXIT_ERROR);
}

#[test]
fn corrupt_log_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let log = tmp(&dir, "run.ndjson");
    assert_eq!(
        revqa(&["ask", "--scenario", &fixture("scenarios/kansas.json"), "--log-out", &log]).code,
        EXIT_OK
    );
    let mut lines: Vec<String> = std::fs::read_to_string(&log).unwrap().lines().map(String::from).collect();
    lines[4] = "{\"seq\": 4, oops".into();
    std::fs::write(&log, lines.join("\n")).unwrap();
    for cmd in ["replay", "inspect"] {
        let r = revqa(&[cmd, "--log", &log]);
        assert_eq!(r.code, EXIT_ERROR);
        assert!(r.stderr.contains("line 5"), "{}", r.stderr);
    }
}

#[test]
fn bench_scripted_hotpot() {
    let dir = tempfile::tempdir().unwrap();
    let out = tmp(&dir, "report.json");
    let r = revqa(&[
        "bench",
        "--dataset",
        &fixture("datasets/hotpot_sample.json"),
        "--format",
        "hotpot",
        "--config",
        &fixture("config/scripted.json"),
        "--out",
        &out,
        "--workers",
        "3",
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert_eq!(r.stdout.trim(), "hotpot_sample: n=5 EM=1.0000 F1=1.0000 disclaimed=0 errors=0");
    let report: revqa_core::evalkit::BenchReport =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report.rows.len(), 5);
    assert_eq!(report.em, 1.0);
}

#[test]
fn bench_sampling_is_deterministic() {
    let args = |seed: &'static str| {
        revqa(&[
            "bench",
            "--dataset",
            &fixture("datasets/hotpot_sample.json"),
            "--format",
            "hotpot-style",
            "--config",
            &fixture("config/scripted.json"),
            "--n",
            "2",
            "--seed",
            seed,
            "--table",
        ])
    };
    let (a, b) = (args("7"), args("7"));
    assert_eq!(a.code, EXIT_OK, "{}", a.stderr);
    assert_eq!(a.stdout, b.stdout);
    assert!(a.stdout.contains("n=2"));
}

#[test]
fn bench_bad_inputs() {
    let r = revqa(&["bench", "--dataset", "/no/such/file.json", "--format", "hotpot"]);
    assert_eq!(r.code, EXIT_ERROR);
    let r = revqa(&[
        "bench",
        "--dataset",
        &fixture("datasets/hotpot_sample.json"),
        "--format",
        "squad",
    ]);
    assert_eq!(r.code, EXIT_ERROR);
    assert!(r.stderr.contains("squad"));
}

#[test]
fn ingest_dataset_round_trips_through_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let out = tmp(&dir, "corpus.ndjson");
    let r = revqa(&[
        "ingest",
        "--dataset",
        &fixture("datasets/musique_sample.jsonl"),
        "--format",
        "musique",
        "--out",
        &out,
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert!(r.stdout.starts_with("documents=20 "));
    let again = revqa(&["ingest", "--corpus", &out]);
    assert_eq!(again.stdout, r.stdout);
}

#[test]
fn ingest_rejects_duplicate_ids() {
    let dir = tempfile::tempdir().unwrap();
    let p = PathBuf::from(tmp(&dir, "dup.ndjson"));
    std::fs::write(&p, "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n").unwrap();
    let r = revqa(&["ingest", "--corpus", p.to_str().unwrap()]);
    assert_eq!(r.code, EXIT_ERROR);
}

#[test]
fn binary_keeps_stdout_clean() {
    let exe = env!("CARGO_BIN_EXE_revqa");
    let ok = Command::new(exe)
        .args(["ask", "--scenario", &fixture("scenarios/kansas.json")])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).starts_with("Kansas Song\n"));
    assert!(ok.stderr.is_empty());

    let bad = Command::new(exe).args(["ask", "--config", "/nope.json"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(bad.stdout.is_empty());
    assert!(!bad.stderr.is_empty());

    let usage = Command::new(exe).args(["frobnicate"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(1));
}
