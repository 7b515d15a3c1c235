//! Human-readable verification reports and the machine-readable trace record.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::claim::{render_descriptor, NewsClaim, VeracityLabel};
use crate::tools::{Signal, ToolKind};
use crate::workflow::{Mode, Strategy, Verification};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub tool: ToolKind,
    pub signal: Signal,
    pub rationale: String,
}

/// One claim's run, flattened for JSON output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub claim_id: String,
    pub descriptor: String,
    pub mode: Mode,
    pub is_political: bool,
    pub politics_rationale: String,
    pub steps: Vec<ToolKind>,
    pub observations: Vec<StepRecord>,
    pub strategy: Strategy,
    pub label: VeracityLabel,
    pub reasoning: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub llm_calls: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<VeracityLabel>,
    /// Set when the claim could not be verified; `label` is then the
    /// fallback prediction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl TraceRecord {
    pub fn from_verification(claim: &NewsClaim, v: &Verification) -> Self {
        let verdict = &v.verdict;
        Self {
            claim_id: v.claim_id.clone(),
            descriptor: render_descriptor(claim),
            mode: verdict.plan.mode,
            is_political: verdict.plan.politics.is_political,
            politics_rationale: verdict.plan.politics.rationale.clone(),
            steps: verdict.plan.steps.clone(),
            observations: verdict
                .observations
                .iter()
                .map(|o| StepRecord {
                    tool: o.tool,
                    signal: o.signal,
                    rationale: o.rationale.clone(),
                })
                .collect(),
            strategy: verdict.strategy,
            label: verdict.label,
            reasoning: verdict.reasoning.clone(),
            notes: v.notes.clone(),
            llm_calls: v.llm_calls,
            gold: None,
            failure: None,
        }
    }

    /// Trace for a claim whose verification aborted. Counted as Fake.
    pub fn failed(claim: &NewsClaim, mode: Mode, strategy: Strategy, error: &str) -> Self {
        Self {
            claim_id: claim.claim_id().to_string(),
            descriptor: render_descriptor(claim),
            mode,
            is_political: false,
            politics_rationale: String::new(),
            steps: Vec::new(),
            observations: Vec::new(),
            strategy,
            label: VeracityLabel::Fake,
            reasoning: format!("verification failed: {error}"),
            notes: Vec::new(),
            llm_calls: 0,
            gold: None,
            failure: Some(error.to_string()),
        }
    }
}

fn signal_heading(signal: Signal) -> &'static str {
    match signal {
        Signal::SupportsReal => "SUPPORTS REAL",
        Signal::SupportsFake => "SUPPORTS FAKE",
        Signal::Inconclusive => "INCONCLUSIVE",
    }
}

fn indented(out: &mut String, text: &str) {
    for line in text.lines() {
        let _ = writeln!(out, "    {line}");
    }
}

/// Step-by-step report: the claim, the politics decision, one section per
/// executed tool, then the verdict with its reasoning.
pub fn render_text(trace: &TraceRecord) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "News: {}", trace.descriptor);
    let _ = writeln!(
        out,
        "Workflow: {} | Decision: {}",
        trace.mode.as_str(),
        trace.strategy.as_str()
    );
    if let Some(failure) = &trace.failure {
        let _ = writeln!(out, "\nVerification failed: {failure}");
        let _ = writeln!(out, "\nVERDICT: {}", trace.label.as_str().to_uppercase());
        return out;
    }
    let _ = writeln!(
        out,
        "Politics: {}",
        if trace.is_political {
            "political"
        } else {
            "not political (Standing_tool skipped)"
        }
    );
    if !trace.politics_rationale.is_empty() {
        indented(&mut out, &trace.politics_rationale);
    }
    for (i, step) in trace.observations.iter().enumerate() {
        let _ = writeln!(
            out,
            "\n[{}] {}: {}",
            i + 1,
            step.tool.tool_name(),
            signal_heading(step.signal)
        );
        indented(&mut out, &step.rationale);
    }
    if !trace.notes.is_empty() {
        let _ = writeln!(out, "\nNotes:");
        for note in &trace.notes {
            let _ = writeln!(out, "  - {note}");
        }
    }
    let _ = writeln!(out, "\nVERDICT: {}", trace.label.as_str().to_uppercase());
    indented(&mut out, &trace.reasoning);
    out
}
