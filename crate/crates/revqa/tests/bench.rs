use std::path::{Path, PathBuf};

use revqa::files;
use revqa::{par_map, run_benchmark, BenchOptions, Threaded};
use revqa_core::agents::ScriptTable;
use revqa_core::engine::{run_scenario, EngineConfig, Sequential};
use revqa_core::evalkit::{corpus, DatasetFormat, BenchReport};
use revqa_core::journal::Outcome;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

#[test]
fn dataset_fixtures_load() {
    let hotpot = files::load_dataset(&fixture("datasets/hotpot_sample.json"), DatasetFormat::Hotpot).unwrap();
    assert_eq!(hotpot.len(), 5);
    assert!(hotpot.iter().all(|e| !e.gold_answer.is_empty() && !e.documents().is_empty()));

    let wiki = files::load_dataset(&fixture("datasets/2wiki_sample.json"), DatasetFormat::TwoWiki).unwrap();
    assert_eq!(wiki.len(), 3);

    let musique = files::load_dataset(&fixture("datasets/musique_sample.jsonl"), DatasetFormat::Musique).unwrap();
    assert_eq!(musique.len(), 2);
    assert_eq!(corpus(&musique).len(), 20);

    // hotpot records are not valid musique records
    assert!(files::load_dataset(&fixture("datasets/hotpot_sample.json"), DatasetFormat::Musique).is_err());
}

fn scripted() -> EngineConfig {
    files::load_config(&fixture("config/scripted.json")).unwrap()
}

fn hotpot() -> Vec<revqa_core::evalkit::QAExample> {
    files::load_dataset(&fixture("datasets/hotpot_sample.json"), DatasetFormat::Hotpot).unwrap()
}

#[test]
fn disclaimed_row_scores_zero() {
    let examples = hotpot();
    let target = &examples[0];
    let extra: ScriptTable = serde_json::from_value(serde_json::json!({
        "assembler": {target.question.clone(): {"final_answer": "", "escalation_signal": "insufficient evidence"}}
    }))
    .unwrap();
    let cfg = scripted();
    let backend = files::build_backend(&cfg, Some(&extra)).unwrap();
    let report = run_benchmark(&examples, &cfg, backend.as_ref(), &BenchOptions::default()).unwrap();
    assert_eq!(report.n, 5);
    assert_eq!(report.disclaimed, 1);
    assert_eq!(report.errors, 0);
    let row = report.rows.iter().find(|r| r.id == target.id).unwrap();
    assert_eq!(row.outcome, Outcome::Disclaimed);
    assert_eq!((row.em, row.f1), (0.0, 0.0));
    assert_eq!(report.em, 4.0 / 5.0);
    assert_eq!(report.f1, 4.0 / 5.0);
}

#[test]
fn engine_failure_becomes_an_error_row() {
    let mut examples = hotpot();
    examples.truncate(2);
    examples[1].question = "A question with no scripted decomposition?".into();
    let cfg = scripted();
    let backend = files::build_backend(&cfg, None).unwrap();
    let report = run_benchmark(&examples, &cfg, backend.as_ref(), &BenchOptions::default()).unwrap();
    assert_eq!(report.errors, 1);
    assert_eq!(report.disclaimed, 1);
    assert_eq!(report.em, 0.5);
    assert!(report.rows[1].error.as_deref().unwrap().contains("decomposer"));
}

#[test]
fn worker_count_does_not_change_the_report() {
    let examples = hotpot();
    let cfg = scripted();
    let backend = files::build_backend(&cfg, None).unwrap();
    let run = |workers| {
        let opts = BenchOptions {
            workers,
            seed: 11,
            n: 4,
            ..BenchOptions::default()
        };
        run_benchmark(&examples, &cfg, backend.as_ref(), &opts).unwrap()
    };
    let one: BenchReport = run(1);
    assert_eq!(one.n, 4);
    for w in [2, 4, 8] {
        assert_eq!(run(w), one);
    }
}

#[test]
fn threaded_gathering_matches_sequential() {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(fixture("ablation"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    paths.push(fixture("scenarios/olympics.json"));
    paths.push(fixture("scenarios/kansas.json"));
    paths.push(fixture("scenarios/permanent_contradiction.json"));
    let base = EngineConfig::default();
    let outcomes = par_map(4, paths.len(), |i| {
        let sc = files::load_scenario(&paths[i]).unwrap();
        let backend = files::build_backend(&base, Some(&sc.script)).unwrap();
        let seq = run_scenario(&sc, &base, backend.as_ref(), &Sequential).unwrap();
        let thr = run_scenario(&sc, &base, backend.as_ref(), &Threaded::new(4)).unwrap();
        (paths[i].clone(), seq.trace == thr.trace, seq.answer)
    });
    for (path, same, answer) in outcomes {
        assert!(same, "{} differs under threads (answer {answer})", path.display());
    }
}
