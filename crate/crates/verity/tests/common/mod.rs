#![allow(dead_code)]

use std::path::PathBuf;

use verity::core::{Checklist, EngineConfig, MemoryDomainStore, Mode, PromptSet, Strategy};
use verity::dataset::load_dataset;
use verity::harness::{run_evaluation, EvaluationReport, EvaluationRun, Harness};
use verity::offline::{FixtureSearch, ScriptSource};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn expected(name: &str) -> EvaluationReport {
    let text = std::fs::read_to_string(fixture(name)).unwrap();
    EvaluationReport::from_json(&text).unwrap()
}

pub struct FixtureRun {
    pub run: EvaluationRun,
    pub script: ScriptSource,
}

/// Evaluates the 12-claim fixture fully offline.
pub fn run_fixture(script: &str, mode: Mode, strategy: Strategy, parallelism: usize) -> FixtureRun {
    let records = load_dataset(&fixture("dataset.jsonl"), true)
        .unwrap()
        .records;
    let source = ScriptSource::load(&fixture(script)).unwrap();
    let search = FixtureSearch::load(&fixture("search.jsonl")).unwrap();
    let store = MemoryDomainStore::new();
    let prompts = PromptSet::default();
    let checklist = Checklist::default();
    let harness = Harness {
        models: &source,
        search: &search,
        store: &store,
        prompts: &prompts,
        checklist: &checklist,
        parallelism,
    };
    let config = EngineConfig {
        mode,
        strategy,
        ..EngineConfig::default()
    };
    let run = run_evaluation(&records, &harness, &config).unwrap();
    FixtureRun {
        run,
        script: source,
    }
}

/// Exact on everything but the floats, which must agree within `tol`.
pub fn compare_reports(
    got: &EvaluationReport,
    want: &EvaluationReport,
    tol: f64,
) -> Result<(), String> {
    let close = |name: &str, a: f64, b: f64| {
        if (a - b).abs() < tol {
            Ok(())
        } else {
            Err(format!("{name}: got {a}, want {b}"))
        }
    };
    close("accuracy", got.accuracy, want.accuracy)?;
    close("f1_macro", got.f1_macro, want.f1_macro)?;
    close("f1_real", got.f1_real, want.f1_real)?;
    close("f1_fake", got.f1_fake, want.f1_fake)?;
    if got.tool_usage.keys().ne(want.tool_usage.keys()) {
        return Err("tool_usage keys differ".into());
    }
    for (k, v) in &want.tool_usage {
        close(&format!("tool_usage[{k}]"), got.tool_usage[k], *v)?;
    }
    if (got.mode, got.strategy, got.n, got.confusion)
        != (want.mode, want.strategy, want.n, want.confusion)
    {
        return Err(format!(
            "header differs: got {:?} {:?} n={} {:?}, want {:?} {:?} n={} {:?}",
            got.mode,
            got.strategy,
            got.n,
            got.confusion,
            want.mode,
            want.strategy,
            want.n,
            want.confusion
        ));
    }
    if got.per_claim != want.per_claim {
        return Err(format!(
            "per-claim outcomes differ:\n got {:?}\nwant {:?}",
            got.per_claim, want.per_claim
        ));
    }
    Ok(())
}
