//! Batch evaluation over a labeled dataset.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use verity_core::metrics::MetricsError;
use verity_core::report::{render_text, TraceRecord};
use verity_core::{
    compute_metrics, tool_usage_frequency, verify_claim, Checklist, Confusion, DatasetRecord,
    DomainStore, EngineConfig, Mode, PromptSet, SearchProvider, Services, Strategy, ToolKind,
    VeracityLabel, WorkflowPlan,
};

use crate::offline::ModelSource;

/// Everything shared by the claims of one evaluation run.
pub struct Harness<'a> {
    pub models: &'a dyn ModelSource,
    pub search: &'a dyn SearchProvider,
    pub store: &'a dyn DomainStore,
    pub prompts: &'a PromptSet,
    pub checklist: &'a Checklist,
    pub parallelism: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimOutcome {
    pub claim_id: String,
    pub gold: VeracityLabel,
    pub predicted: VeracityLabel,
    pub strategy: Strategy,
    pub mode: Mode,
    /// Why verification aborted; the prediction is then the Fake fallback.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mode: Mode,
    pub strategy: Strategy,
    pub n: usize,
    pub accuracy: f64,
    pub f1_macro: f64,
    pub f1_real: f64,
    pub f1_fake: f64,
    pub confusion: Confusion,
    /// Fraction of planned claims whose plan contains each tool.
    pub tool_usage: BTreeMap<ToolKind, f64>,
    pub per_claim: Vec<ClaimOutcome>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn failures(&self) -> usize {
        self.per_claim
            .iter()
            .filter(|c| c.failure.is_some())
            .count()
    }
}

pub struct EvaluationRun {
    pub report: EvaluationReport,
    /// One per claim, sorted by claim id like `report.per_claim`.
    pub traces: Vec<TraceRecord>,
}

fn run_one(
    record: &DatasetRecord,
    harness: &Harness<'_>,
    config: &EngineConfig,
) -> (TraceRecord, Option<WorkflowPlan>) {
    let claim = &record.claim;
    let model = harness.models.model_for(claim.claim_id());
    let services = Services {
        model: model.as_ref(),
        search: harness.search,
        store: harness.store,
        prompts: harness.prompts,
        checklist: harness.checklist,
    };
    let (mut trace, plan) = match verify_claim(claim, &services, config) {
        Ok(v) => (
            TraceRecord::from_verification(claim, &v),
            Some(v.verdict.plan),
        ),
        Err(e) => (
            TraceRecord::failed(claim, config.mode, config.strategy, &e.to_string()),
            None,
        ),
    };
    trace.gold = Some(record.gold_label);
    (trace, plan)
}

/// Verifies every record with up to `parallelism` worker threads. Failed
/// claims count as Fake predictions and are marked in the report. The
/// domain store is read but not updated, so results do not depend on the
/// order claims finish in.
pub fn run_evaluation(
    records: &[DatasetRecord],
    harness: &Harness<'_>,
    config: &EngineConfig,
) -> Result<EvaluationRun, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let workers = harness.parallelism.clamp(1, records.len());
    let next = AtomicUsize::new(0);
    let done = Mutex::new(Vec::with_capacity(records.len()));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(record) = records.get(i) else { break };
                let result = run_one(record, harness, config);
                done.lock().unwrap().push(result);
            });
        }
    });
    let mut done = done.into_inner().unwrap();
    done.sort_by(|a, b| a.0.claim_id.cmp(&b.0.claim_id));

    let pairs: Vec<_> = done
        .iter()
        .map(|(t, _)| (t.gold.expect("gold set"), t.label))
        .collect();
    let scores = compute_metrics(&pairs)?;
    let plans: Vec<WorkflowPlan> = done.iter().filter_map(|(_, p)| p.clone()).collect();
    let tool_usage = match tool_usage_frequency(&plans) {
        Ok(u) => u,
        Err(MetricsError::EmptyInput) => ToolKind::ALL.into_iter().map(|k| (k, 0.0)).collect(),
    };
    let per_claim = done
        .iter()
        .map(|(t, _)| ClaimOutcome {
            claim_id: t.claim_id.clone(),
            gold: t.gold.expect("gold set"),
            predicted: t.label,
            strategy: t.strategy,
            mode: t.mode,
            failure: t.failure.clone(),
        })
        .collect();
    Ok(EvaluationRun {
        report: EvaluationReport {
            mode: config.mode,
            strategy: config.strategy,
            n: scores.n,
            accuracy: scores.accuracy,
            f1_macro: scores.f1_macro,
            f1_real: scores.f1_real,
            f1_fake: scores.f1_fake,
            confusion: scores.confusion,
            tool_usage,
            per_claim,
        },
        traces: done.into_iter().map(|(t, _)| t).collect(),
    })
}

/// Markdown summary: one metrics row and the tool-usage histogram.
pub fn render_table(report: &EvaluationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "| Workflow | Decision | n | F1 | Acc. | F1_real | F1_fake |"
    );
    let _ = writeln!(out, "|---|---|---|---|---|---|---|");
    let _ = writeln!(
        out,
        "| {} | {} | {} | {:.3} | {:.3} | {:.3} | {:.3} |",
        report.mode.as_str(),
        report.strategy.as_str(),
        report.n,
        report.f1_macro,
        report.accuracy,
        report.f1_real,
        report.f1_fake
    );
    let _ = writeln!(out, "\n| Tool | Usage |\n|---|---|");
    for (tool, share) in &report.tool_usage {
        let _ = writeln!(out, "| {} | {:.3} |", tool.tool_name(), share);
    }
    if report.failures() > 0 {
        let _ = writeln!(
            out,
            "\n{} claim(s) failed and were counted as fake.",
            report.failures()
        );
    }
    out
}

/// File-name-safe form of a claim id.
pub fn trace_file_stem(claim_id: &str) -> String {
    claim_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes `report.json`, `report.md` and `traces/<claim_id>.{json,txt}`.
pub fn write_outputs(dir: &Path, run: &EvaluationRun) -> std::io::Result<()> {
    let traces = dir.join("traces");
    fs::create_dir_all(&traces)?;
    fs::write(dir.join("report.json"), run.report.to_json() + "\n")?;
    fs::write(dir.join("report.md"), render_table(&run.report))?;
    for trace in &run.traces {
        let stem = trace_file_stem(&trace.claim_id);
        let json = serde_json::to_string_pretty(trace).map_err(std::io::Error::other)?;
        fs::write(traces.join(format!("{stem}.json")), json + "\n")?;
        fs::write(traces.join(format!("{stem}.txt")), render_text(trace))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stems_are_safe() {
        assert_eq!(trace_file_stem("pf-01"), "pf-01");
        assert_eq!(trace_file_stem("a/b c"), "a_b_c");
    }
}
