//! Workflow planning, execution and the final decision.
//!
//! A claim is verified by first asking whether it is political, then
//! building a plan (the fixed expert order, or a tool list chosen by the
//! model), running each tool in order, and finally turning the observations
//! into a binary verdict either by a checklist-guided model summary or by a
//! plain majority vote.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::claim::{render_descriptor, NewsClaim, VeracityLabel};
use crate::evidence::{
    run_search_tool, run_url_tool, DomainStore, EvidenceError, SearchProvider, SearchResult,
    DEFAULT_MAX_RESULTS,
};
use crate::llm::{CallBudget, ChatModel, LlmError, DEFAULT_CALL_BUDGET};
use crate::tools::{
    classify_politics, exchange, parse_tool_output, run_internal_tool, PoliticsFlag, PromptSet,
    Signal, TemplateKey, ToolError, ToolKind, ToolObservation,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorkflowError {
    #[error("plan is empty")]
    EmptyPlan,
    #[error("no observations to decide on")]
    EmptyObservations,
    #[error("plan violates its invariants: {0}")]
    InvalidPlan(String),
    #[error("planner reply could not be parsed: {raw:?}")]
    UnparsablePlan { raw: String },
    #[error(transparent)]
    Llm(LlmError),
}

impl WorkflowError {
    pub fn is_budget_exhausted(&self) -> bool {
        matches!(self, WorkflowError::Llm(LlmError::BudgetExceeded { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Expert,
    SelfDesigned,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Expert => "expert",
            Mode::SelfDesigned => "self-designed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Strategy {
    #[default]
    #[serde(rename = "checklist")]
    ChecklistSummary,
    #[serde(rename = "majority")]
    MajorityVote,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::ChecklistSummary => "checklist",
            Strategy::MajorityVote => "majority",
        }
    }
}

/// Ablation switches: tools listed here never appear in a plan.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ToolSwitches {
    pub disabled: BTreeSet<ToolKind>,
}

impl ToolSwitches {
    pub fn all_enabled() -> Self {
        Self::default()
    }

    pub fn disable(mut self, kind: ToolKind) -> Self {
        self.disabled.insert(kind);
        self
    }

    pub fn is_enabled(&self, kind: ToolKind) -> bool {
        !self.disabled.contains(&kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowPlan {
    pub steps: Vec<ToolKind>,
    pub mode: Mode,
    pub politics: PoliticsFlag,
}

impl WorkflowPlan {
    pub fn contains(&self, kind: ToolKind) -> bool {
        self.steps.contains(&kind)
    }

    /// Checks non-emptiness, uniqueness, and that Standing/Url only appear
    /// when the claim qualifies for them.
    pub fn validate(&self, claim: &NewsClaim) -> Result<(), WorkflowError> {
        if self.steps.is_empty() {
            return Err(WorkflowError::EmptyPlan);
        }
        let unique: BTreeSet<_> = self.steps.iter().collect();
        if unique.len() != self.steps.len() {
            return Err(WorkflowError::InvalidPlan("duplicate step".into()));
        }
        if self.contains(ToolKind::Standing) && !self.politics.is_political {
            return Err(WorkflowError::InvalidPlan(
                "Standing planned for a non-political claim".into(),
            ));
        }
        if self.contains(ToolKind::Url) && claim.domain_url().is_none() {
            return Err(WorkflowError::InvalidPlan(
                "Url planned for a claim without a domain".into(),
            ));
        }
        Ok(())
    }
}

/// Expert order: Phrase, Language, Commonsense, Standing (political claims
/// only), Url (claims with a domain only), Search.
pub fn plan_expert(
    claim: &NewsClaim,
    politics: &PoliticsFlag,
    switches: &ToolSwitches,
) -> Result<WorkflowPlan, WorkflowError> {
    let steps: Vec<ToolKind> = [
        ToolKind::Phrase,
        ToolKind::Language,
        ToolKind::Commonsense,
        ToolKind::Standing,
        ToolKind::Url,
        ToolKind::Search,
    ]
    .into_iter()
    .filter(|&k| switches.is_enabled(k))
    .filter(|&k| k != ToolKind::Standing || politics.is_political)
    .filter(|&k| k != ToolKind::Url || claim.domain_url().is_some())
    .collect();
    if steps.is_empty() {
        return Err(WorkflowError::EmptyPlan);
    }
    Ok(WorkflowPlan {
        steps,
        mode: Mode::Expert,
        politics: politics.clone(),
    })
}

/// One entry of a planner reply: a recognized tool or the text that was not.
pub type PlannerToken = Result<ToolKind, String>;

/// Splits a planner reply on commas, semicolons, newlines and arrows, and
/// strips list markers. Returns `None` when no tool name is recognized.
pub fn parse_plan_reply(reply: &str) -> Option<Vec<PlannerToken>> {
    let tokens: Vec<PlannerToken> = reply
        .replace("->", ",")
        .replace('→', ",")
        .split([',', ';', '\n'])
        .map(|t| {
            t.trim()
                .trim_start_matches(|c: char| {
                    c.is_ascii_digit() || matches!(c, '.' | ')' | '-' | '*')
                })
                .trim()
        })
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<ToolKind>().map_err(|_| t.to_string()))
        .collect();
    tokens.iter().any(Result::is_ok).then_some(tokens)
}

/// Turns parsed planner tokens into a valid step list, logging every
/// dropped entry.
pub fn repair_plan(
    tokens: &[PlannerToken],
    claim: &NewsClaim,
    politics: &PoliticsFlag,
    switches: &ToolSwitches,
) -> (Vec<ToolKind>, Vec<String>) {
    let mut steps = Vec::new();
    let mut repairs = Vec::new();
    for token in tokens {
        let kind = match token {
            Ok(k) => *k,
            Err(name) => {
                repairs.push(format!("dropped unknown tool {name:?}"));
                continue;
            }
        };
        if steps.contains(&kind) {
            repairs.push(format!("dropped duplicate {}", kind.tool_name()));
        } else if !switches.is_enabled(kind) {
            repairs.push(format!(
                "removed {}: disabled by configuration",
                kind.tool_name()
            ));
        } else if kind == ToolKind::Standing && !politics.is_political {
            repairs.push("removed Standing_tool: claim is not political".to_string());
        } else if kind == ToolKind::Url && claim.domain_url().is_none() {
            repairs.push("removed URL_tool: claim has no domain URL".to_string());
        } else {
            steps.push(kind);
        }
    }
    (steps, repairs)
}

pub const PLANNER_REPROMPT: &str =
    "Answer again with only a comma-separated list of tool names, for example: Phrase_tool, Search_tool";

fn planner_tool_list(switches: &ToolSwitches) -> String {
    let mut out = String::new();
    for kind in ToolKind::ALL
        .into_iter()
        .filter(|&k| switches.is_enabled(k))
    {
        let _ = writeln!(out, "- {}: {}", kind.tool_name(), kind.summary());
    }
    out.trim_end().to_string()
}

/// Asks the model to choose and order tools, then repairs the answer into a
/// valid plan. Returns the plan and the repair log.
pub fn plan_self_designed(
    claim: &NewsClaim,
    politics: &PoliticsFlag,
    model: &dyn ChatModel,
    prompts: &PromptSet,
    switches: &ToolSwitches,
) -> Result<(WorkflowPlan, Vec<String>), WorkflowError> {
    let request = prompts.request(
        TemplateKey::Planner,
        &render_descriptor(claim),
        &planner_tool_list(switches),
    );
    let (tokens, _) = exchange(model, request, PLANNER_REPROMPT, |raw| {
        parse_plan_reply(raw).ok_or_else(|| ToolError::UnparsableOutput {
            raw: raw.to_string(),
        })
    })
    .map_err(|e| match e {
        ToolError::Llm(e) => WorkflowError::Llm(e),
        ToolError::UnparsableOutput { raw } => WorkflowError::UnparsablePlan { raw },
        other => WorkflowError::UnparsablePlan {
            raw: other.to_string(),
        },
    })?;
    let (steps, repairs) = repair_plan(&tokens, claim, politics, switches);
    if steps.is_empty() {
        return Err(WorkflowError::EmptyPlan);
    }
    Ok((
        WorkflowPlan {
            steps,
            mode: Mode::SelfDesigned,
            politics: politics.clone(),
        },
        repairs,
    ))
}

/// Checklist criterion per tool. Defaults to the tools' one-line summaries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checklist {
    criteria: BTreeMap<ToolKind, String>,
}

impl Default for Checklist {
    fn default() -> Self {
        Self {
            criteria: ToolKind::ALL
                .into_iter()
                .map(|k| (k, default_criterion(k)))
                .collect(),
        }
    }
}

fn default_criterion(kind: ToolKind) -> String {
    match kind {
        ToolKind::Phrase => "Does the news use sensational teasers, emotionally charged language or exaggeration?",
        ToolKind::Language => "Does the news contain grammar or wording errors, misused quotation marks or words in all caps?",
        ToolKind::Commonsense => "Does the news read like gossip or contradict common knowledge?",
        ToolKind::Standing => "Does the news promote a political viewpoint, reinforce biases or demonise opponents rather than present objective facts?",
        ToolKind::Search => "Do other media outlets report conflicting information, or is there little evidence supporting the claim?",
        ToolKind::Url => "Does the news come from a domain that lacks credibility or has a history of fake news?",
    }
    .to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("checklist line {line}: {reason}")]
pub struct ChecklistParseError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistItem {
    pub tool: ToolKind,
    pub criterion: String,
}

impl Checklist {
    /// Parses `<tool>: <criterion>` lines over the defaults. Blank lines and
    /// `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, ChecklistParseError> {
        let mut checklist = Self::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| ChecklistParseError {
                line: idx + 1,
                reason,
            };
            let (key, criterion) = line
                .split_once(':')
                .ok_or_else(|| err("expected `<tool>: <criterion>`".into()))?;
            let kind: ToolKind = key
                .parse()
                .map_err(|e: crate::tools::UnknownTool| err(e.to_string()))?;
            let criterion = criterion.trim();
            if criterion.is_empty() {
                return Err(err("empty criterion".into()));
            }
            checklist.criteria.insert(kind, criterion.to_string());
        }
        Ok(checklist)
    }

    pub fn criterion(&self, kind: ToolKind) -> &str {
        &self.criteria[&kind]
    }

    pub fn set(&mut self, kind: ToolKind, criterion: impl Into<String>) {
        self.criteria.insert(kind, criterion.into());
    }

    /// One item per executed step, in plan order. A skipped tool has no item.
    pub fn items_for(&self, plan: &WorkflowPlan) -> Vec<ChecklistItem> {
        plan.steps
            .iter()
            .map(|&tool| ChecklistItem {
                tool,
                criterion: self.criterion(tool).to_string(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalVerdict {
    pub label: VeracityLabel,
    pub reasoning: String,
    pub observations: Vec<ToolObservation>,
    pub strategy: Strategy,
    pub plan: WorkflowPlan,
}

/// Everything `verify_claim` needs besides the claim itself.
#[derive(Clone, Copy)]
pub struct Services<'a> {
    pub model: &'a dyn ChatModel,
    pub search: &'a dyn SearchProvider,
    pub store: &'a dyn DomainStore,
    pub prompts: &'a PromptSet,
    pub checklist: &'a Checklist,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub mode: Mode,
    pub strategy: Strategy,
    pub switches: ToolSwitches,
    pub max_results: usize,
    /// Maximum model calls for one claim.
    pub call_budget: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Expert,
            strategy: Strategy::ChecklistSummary,
            switches: ToolSwitches::default(),
            max_results: DEFAULT_MAX_RESULTS,
            call_budget: DEFAULT_CALL_BUDGET,
        }
    }
}

/// Side products of running a plan besides the observations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Execution {
    pub observations: Vec<ToolObservation>,
    pub search_results: Vec<SearchResult>,
    pub domain_overview: Option<String>,
}

fn evidence_failure(kind: ToolKind, err: EvidenceError) -> Result<ToolObservation, WorkflowError> {
    match err {
        EvidenceError::Tool(ToolError::Llm(e @ LlmError::BudgetExceeded { .. })) => {
            Err(WorkflowError::Llm(e))
        }
        other => Ok(ToolObservation::failed(kind, &other)),
    }
}

/// Runs every step in order. A failing tool contributes an inconclusive
/// observation; only an exhausted call budget aborts.
pub fn execute(
    plan: &WorkflowPlan,
    claim: &NewsClaim,
    services: &Services<'_>,
    max_results: usize,
) -> Result<Execution, WorkflowError> {
    plan.validate(claim)?;
    let mut out = Execution::default();
    for &kind in &plan.steps {
        let obs = match kind {
            ToolKind::Search => match run_search_tool(
                claim,
                services.model,
                services.search,
                services.prompts,
                max_results,
            ) {
                Ok(f) => {
                    out.search_results = f.results;
                    f.observation
                }
                Err(e) => evidence_failure(kind, e)?,
            },
            ToolKind::Url => {
                match run_url_tool(claim, services.model, services.store, services.prompts) {
                    Ok(f) => {
                        out.domain_overview = Some(f.overview);
                        f.observation
                    }
                    Err(e) => evidence_failure(kind, e)?,
                }
            }
            _ => match run_internal_tool(kind, claim, services.model, services.prompts) {
                Ok(obs) => obs,
                Err(ToolError::Llm(e @ LlmError::BudgetExceeded { .. })) => {
                    return Err(WorkflowError::Llm(e))
                }
                Err(e) => ToolObservation::failed(kind, &e),
            },
        };
        out.observations.push(obs);
    }
    Ok(out)
}

/// Vote counts behind a majority decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub fake: usize,
    pub real: usize,
    pub inconclusive: usize,
}

impl Tally {
    pub fn of(observations: &[ToolObservation]) -> Self {
        Self::of_signals(observations.iter().map(|o| o.signal))
    }

    pub fn of_signals(signals: impl IntoIterator<Item = Signal>) -> Self {
        let mut t = Tally {
            fake: 0,
            real: 0,
            inconclusive: 0,
        };
        for s in signals {
            match s {
                Signal::SupportsFake => t.fake += 1,
                Signal::SupportsReal => t.real += 1,
                Signal::Inconclusive => t.inconclusive += 1,
            }
        }
        t
    }

    /// Strict majority of decisive votes; ties (including no decisive votes)
    /// go to Fake.
    pub fn label(&self) -> VeracityLabel {
        if self.real > self.fake {
            VeracityLabel::Real
        } else {
            VeracityLabel::Fake
        }
    }

    pub fn is_tie(&self) -> bool {
        self.real == self.fake
    }

    pub fn describe(&self) -> String {
        let mut s = format!(
            "Majority vote over tool signals: {} fake, {} real, {} inconclusive.",
            self.fake, self.real, self.inconclusive
        );
        if self.is_tie() {
            s.push_str(" The vote is tied, which resolves to fake.");
        } else {
            let _ = write!(s, " The majority says {}.", self.label());
        }
        s
    }
}

pub fn decide_majority(
    observations: &[ToolObservation],
    plan: &WorkflowPlan,
) -> Result<FinalVerdict, WorkflowError> {
    if observations.is_empty() {
        return Err(WorkflowError::EmptyObservations);
    }
    let tally = Tally::of(observations);
    Ok(FinalVerdict {
        label: tally.label(),
        reasoning: tally.describe(),
        observations: observations.to_vec(),
        strategy: Strategy::MajorityVote,
        plan: plan.clone(),
    })
}

fn indent_continuation(text: &str) -> String {
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        if i > 0 {
            out.push_str("\n   ");
        }
        out.push_str(line);
    }
    out
}

/// The criterion/observation pairs shown to the model at the decision step.
/// Exactly one line starts with `Criterion ` per executed step.
pub fn render_checklist_evidence(
    observations: &[ToolObservation],
    plan: &WorkflowPlan,
    checklist: &Checklist,
) -> String {
    let mut out = String::new();
    for (i, (item, obs)) in checklist
        .items_for(plan)
        .iter()
        .zip(observations)
        .enumerate()
    {
        let n = i + 1;
        let _ = writeln!(
            out,
            "Criterion {n} ({}): {}",
            item.tool.tool_name(),
            item.criterion
        );
        let _ = writeln!(
            out,
            "Observation {n} [{}]: {}",
            obs.signal,
            indent_continuation(&obs.rationale)
        );
        out.push('\n');
    }
    out.trim_end().to_string()
}

pub const CHECKLIST_REPROMPT: &str = "Answer again ending with a line 'VERDICT: REAL|FAKE'.";

/// Final decision by one model exchange over the checklist. An UNCERTAIN or
/// unparsable answer is asked once more; if that fails too, the majority
/// vote decides.
pub fn decide_checklist(
    observations: &[ToolObservation],
    plan: &WorkflowPlan,
    claim: &NewsClaim,
    model: &dyn ChatModel,
    prompts: &PromptSet,
    checklist: &Checklist,
) -> Result<FinalVerdict, WorkflowError> {
    if observations.is_empty() {
        return Err(WorkflowError::EmptyObservations);
    }
    if observations.len() != plan.steps.len() {
        return Err(WorkflowError::InvalidPlan(
            "observations do not align with plan steps".into(),
        ));
    }
    let request = prompts.request(
        TemplateKey::Checklist,
        &render_descriptor(claim),
        &render_checklist_evidence(observations, plan, checklist),
    );
    let outcome = exchange(
        model,
        request,
        CHECKLIST_REPROMPT,
        |raw| match parse_tool_output(raw)? {
            (Signal::SupportsReal, r) => Ok((VeracityLabel::Real, r)),
            (Signal::SupportsFake, r) => Ok((VeracityLabel::Fake, r)),
            (Signal::Inconclusive, _) => Err(ToolError::UnparsableOutput {
                raw: raw.to_string(),
            }),
        },
    );
    match outcome {
        Ok(((label, reasoning), _)) => Ok(FinalVerdict {
            label,
            reasoning,
            observations: observations.to_vec(),
            strategy: Strategy::ChecklistSummary,
            plan: plan.clone(),
        }),
        Err(ToolError::Llm(e @ LlmError::BudgetExceeded { .. })) => Err(WorkflowError::Llm(e)),
        Err(e) => {
            let mut verdict = decide_majority(observations, plan)?;
            verdict.reasoning = format!(
                "Checklist summary gave no binary verdict ({}); falling back to majority vote. {}",
                short_reason(&e),
                verdict.reasoning
            );
            Ok(verdict)
        }
    }
}

fn short_reason(e: &ToolError) -> String {
    match e {
        ToolError::UnparsableOutput { .. } => "no REAL/FAKE verdict line".to_string(),
        other => other.to_string(),
    }
}

/// Result of verifying one claim end to end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verification {
    pub claim_id: String,
    pub verdict: FinalVerdict,
    /// Planner repairs and degraded steps, in the order they happened.
    pub notes: Vec<String>,
    pub llm_calls: usize,
    #[serde(default)]
    pub search_results: Vec<SearchResult>,
    #[serde(default)]
    pub domain_overview: Option<String>,
}

/// Politics gate, plan, execute, decide. All model traffic for the claim
/// goes through a fresh call budget.
pub fn verify_claim(
    claim: &NewsClaim,
    services: &Services<'_>,
    config: &EngineConfig,
) -> Result<Verification, WorkflowError> {
    let budget = CallBudget::new(services.model, config.call_budget);
    let scoped = Services {
        model: &budget,
        ..*services
    };
    let mut notes = Vec::new();

    let politics = match classify_politics(claim, &budget, services.prompts) {
        Ok(flag) => flag,
        Err(ToolError::Llm(e @ LlmError::BudgetExceeded { .. })) => {
            return Err(WorkflowError::Llm(e))
        }
        Err(e) => {
            notes.push(format!(
                "politics gate failed ({e}); treating claim as not political"
            ));
            PoliticsFlag::new(false, "politics gate failed")
        }
    };

    let plan = match config.mode {
        Mode::Expert => plan_expert(claim, &politics, &config.switches)?,
        Mode::SelfDesigned => {
            let (plan, repairs) = plan_self_designed(
                claim,
                &politics,
                &budget,
                services.prompts,
                &config.switches,
            )?;
            notes.extend(repairs);
            plan
        }
    };

    let execution = execute(&plan, claim, &scoped, config.max_results)?;
    for obs in &execution.observations {
        if obs.rationale.starts_with("tool failed:") {
            notes.push(format!("{}: {}", obs.tool.tool_name(), obs.rationale));
        }
    }

    let verdict = match config.strategy {
        Strategy::MajorityVote => decide_majority(&execution.observations, &plan)?,
        Strategy::ChecklistSummary => decide_checklist(
            &execution.observations,
            &plan,
            claim,
            &budget,
            services.prompts,
            services.checklist,
        )?,
    };

    Ok(Verification {
        claim_id: claim.claim_id().to_string(),
        verdict,
        notes,
        llm_calls: budget.used(),
        search_results: execution.search_results,
        domain_overview: execution.domain_overview,
    })
}

#[cfg(test)]
mod tests {
    use super::Strategy;
    use super::*;
    use crate::evidence::{MemoryDomainStore, SearchQuery};
    use crate::llm::ScriptedModel;
    use proptest::prelude::*;

    struct NoResults;
    impl SearchProvider for NoResults {
        fn search(&self, _: &SearchQuery) -> Result<Vec<SearchResult>, EvidenceError> {
            Ok(Vec::new())
        }
    }

    struct FixedResults;
    impl SearchProvider for FixedResults {
        fn search(&self, _: &SearchQuery) -> Result<Vec<SearchResult>, EvidenceError> {
            Ok(alloc::vec![SearchResult {
                title: "Other outlet".into(),
                snippet: "reports otherwise".into(),
                source_url: "https://other.example/a".into(),
                published: None,
            }])
        }
    }

    fn claim(domain: bool) -> NewsClaim {
        let c = NewsClaim::new("c", "Some headline").unwrap();
        if domain {
            c.with_domain("example.org").unwrap()
        } else {
            c
        }
    }

    fn politics(p: bool) -> PoliticsFlag {
        PoliticsFlag::new(p, "")
    }

    fn obs(kind: ToolKind, signal: Signal) -> ToolObservation {
        let token = match signal {
            Signal::SupportsReal => "REAL",
            Signal::SupportsFake => "FAKE",
            Signal::Inconclusive => "UNCERTAIN",
        };
        ToolObservation::from_output(kind, &format!("because\nVERDICT: {token}")).unwrap()
    }

    use ToolKind::*;

    #[test]
    fn expert_plans() {
        let all = ToolSwitches::all_enabled();
        assert_eq!(
            plan_expert(&claim(true), &politics(true), &all)
                .unwrap()
                .steps,
            [Phrase, Language, Commonsense, Standing, Url, Search]
        );
        assert_eq!(
            plan_expert(&claim(false), &politics(false), &all)
                .unwrap()
                .steps,
            [Phrase, Language, Commonsense, Search]
        );
        assert_eq!(
            plan_expert(&claim(true), &politics(false), &all.clone().disable(Search))
                .unwrap()
                .steps,
            [Phrase, Language, Commonsense, Url]
        );
        let mut none = ToolSwitches::default();
        none.disabled.extend(ToolKind::ALL);
        assert_eq!(
            plan_expert(&claim(true), &politics(true), &none).unwrap_err(),
            WorkflowError::EmptyPlan
        );
    }

    #[test]
    fn expert_routing_grid() {
        for political in [false, true] {
            for has_domain in [false, true] {
                for mask in 0u32..64 {
                    let mut sw = ToolSwitches::default();
                    for (i, k) in ToolKind::ALL.into_iter().enumerate() {
                        if mask & (1 << i) != 0 {
                            sw.disabled.insert(k);
                        }
                    }
                    let c = claim(has_domain);
                    match plan_expert(&c, &politics(political), &sw) {
                        Ok(plan) => {
                            assert_eq!(
                                plan.contains(Standing),
                                political && sw.is_enabled(Standing)
                            );
                            assert_eq!(plan.contains(Url), has_domain && sw.is_enabled(Url));
                            plan.validate(&c).unwrap();
                        }
                        Err(WorkflowError::EmptyPlan) => {}
                        Err(e) => panic!("{e}"),
                    }
                }
            }
        }
    }

    #[test]
    fn self_designed_parse() {
        let p = PromptSet::default();
        let sw = ToolSwitches::default();
        let m = ScriptedModel::new(["Phrase, Commonsense, Search"]);
        let (plan, repairs) =
            plan_self_designed(&claim(true), &politics(false), &m, &p, &sw).unwrap();
        assert_eq!(plan.steps, [Phrase, Commonsense, Search]);
        assert_eq!(plan.mode, Mode::SelfDesigned);
        assert!(repairs.is_empty());
        let prompt = &m.transcript()[0].user_text;
        for k in ToolKind::ALL {
            assert!(prompt.contains(k.tool_name()));
        }
    }

    #[test]
    fn self_designed_repairs() {
        let p = PromptSet::default();
        let sw = ToolSwitches::default();
        let m = ScriptedModel::new(["Phrase, Standing"]);
        let (plan, repairs) =
            plan_self_designed(&claim(true), &politics(false), &m, &p, &sw).unwrap();
        assert_eq!(plan.steps, [Phrase]);
        assert_eq!(repairs.len(), 1);
        assert!(repairs[0].contains("Standing"));

        let m = ScriptedModel::new(["Phrase, Phrase, Url"]);
        let (plan, repairs) =
            plan_self_designed(&claim(false), &politics(true), &m, &p, &sw).unwrap();
        assert_eq!(plan.steps, [Phrase]);
        assert_eq!(repairs.len(), 2);
    }

    #[test]
    fn self_designed_numbered_list_and_reprompt() {
        let p = PromptSet::default();
        let sw = ToolSwitches::default();
        let m = ScriptedModel::new([
            "I am not sure.",
            "1. Search_tool\n2. URL_tool\n3. Oracle_tool",
        ]);
        let (plan, repairs) =
            plan_self_designed(&claim(true), &politics(false), &m, &p, &sw).unwrap();
        assert_eq!(plan.steps, [Search, Url]);
        assert_eq!(repairs, ["dropped unknown tool \"Oracle_tool\""]);
        assert!(m.transcript()[1].user_text.ends_with(PLANNER_REPROMPT));

        let m = ScriptedModel::new(["nothing", "still nothing"]);
        assert!(matches!(
            plan_self_designed(&claim(true), &politics(false), &m, &p, &sw),
            Err(WorkflowError::UnparsablePlan { .. })
        ));

        let m = ScriptedModel::new(["Standing"]);
        assert_eq!(
            plan_self_designed(&claim(true), &politics(false), &m, &p, &sw).unwrap_err(),
            WorkflowError::EmptyPlan
        );
    }

    fn services<'a>(
        model: &'a dyn ChatModel,
        search: &'a dyn SearchProvider,
        store: &'a MemoryDomainStore,
        prompts: &'a PromptSet,
        checklist: &'a Checklist,
    ) -> Services<'a> {
        Services {
            model,
            search,
            store,
            prompts,
            checklist,
        }
    }

    #[test]
    fn execute_in_order_with_failure_isolation() {
        let plan = WorkflowPlan {
            steps: alloc::vec![Phrase, Language, Commonsense, Search],
            mode: Mode::Expert,
            politics: politics(false),
        };
        let m = ScriptedModel::new([
            "VERDICT: FAKE\nteaser",
            "garbled",
            "still garbled",
            "VERDICT: REAL\nplausible",
        ]);
        let (p, c, s) = (
            PromptSet::default(),
            Checklist::default(),
            MemoryDomainStore::new(),
        );
        let svc = services(&m, &NoResults, &s, &p, &c);
        let out = execute(&plan, &claim(false), &svc, 8).unwrap();
        let kinds: Vec<_> = out.observations.iter().map(|o| o.tool).collect();
        assert_eq!(kinds, plan.steps);
        assert_eq!(out.observations[1].signal, Signal::Inconclusive);
        assert!(out.observations[1].rationale.starts_with("tool failed: "));
        assert_eq!(out.observations[2].signal, Signal::SupportsReal);
        assert_eq!(out.observations[3].signal, Signal::Inconclusive);
        assert_eq!(m.calls(), 4);
        for o in &out.observations {
            assert_eq!(
                parse_tool_output(&o.raw_output).unwrap(),
                (o.signal, o.rationale.clone())
            );
        }
    }

    #[test]
    fn execute_rejects_invalid_plan() {
        let plan = WorkflowPlan {
            steps: alloc::vec![Standing],
            mode: Mode::SelfDesigned,
            politics: politics(false),
        };
        let m = ScriptedModel::default();
        let (p, c, s) = (
            PromptSet::default(),
            Checklist::default(),
            MemoryDomainStore::new(),
        );
        let svc = services(&m, &NoResults, &s, &p, &c);
        assert!(matches!(
            execute(&plan, &claim(false), &svc, 8),
            Err(WorkflowError::InvalidPlan(_))
        ));
    }

    #[test]
    fn majority_examples() {
        let plan = plan_expert(&claim(true), &politics(false), &ToolSwitches::default()).unwrap();
        let v = decide_majority(
            &[
                obs(Phrase, Signal::SupportsFake),
                obs(Language, Signal::SupportsFake),
                obs(Commonsense, Signal::SupportsReal),
                obs(Url, Signal::Inconclusive),
            ],
            &plan,
        )
        .unwrap();
        assert_eq!(v.label, VeracityLabel::Fake);
        assert!(v.reasoning.contains("2 fake, 1 real, 1 inconclusive"));
        let real: Vec<_> = ToolKind::ALL[..5]
            .iter()
            .map(|&k| obs(k, Signal::SupportsReal))
            .collect();
        assert_eq!(
            decide_majority(&real, &plan).unwrap().label,
            VeracityLabel::Real
        );
        let undecided = [obs(Phrase, Signal::Inconclusive)];
        let v = decide_majority(&undecided, &plan).unwrap();
        assert_eq!(v.label, VeracityLabel::Fake);
        assert!(v.reasoning.contains("tied"));
        assert_eq!(
            decide_majority(&[], &plan).unwrap_err(),
            WorkflowError::EmptyObservations
        );
    }

    #[test]
    fn checklist_decisions() {
        let c = claim(false);
        let plan = plan_expert(&c, &politics(false), &ToolSwitches::default()).unwrap();
        let observations: Vec<_> = plan
            .steps
            .iter()
            .map(|&k| obs(k, Signal::SupportsReal))
            .collect();
        let (p, cl) = (PromptSet::default(), Checklist::default());

        let m = ScriptedModel::new(["VERDICT: FAKE\nthree checklist items violated"]);
        let v = decide_checklist(&observations, &plan, &c, &m, &p, &cl).unwrap();
        assert_eq!(v.label, VeracityLabel::Fake);
        assert_eq!(v.reasoning, "three checklist items violated");
        assert_eq!(v.strategy, Strategy::ChecklistSummary);
        let prompt = &m.transcript()[0].user_text;
        assert_eq!(
            prompt
                .lines()
                .filter(|l| l.starts_with("Criterion "))
                .count(),
            plan.steps.len()
        );

        let m = ScriptedModel::new(["VERDICT: UNCERTAIN\nhmm", "VERDICT: REAL\nok on reflection"]);
        let v = decide_checklist(&observations, &plan, &c, &m, &p, &cl).unwrap();
        assert_eq!(v.label, VeracityLabel::Real);
        assert!(m.transcript()[1].user_text.ends_with(CHECKLIST_REPROMPT));

        let m = ScriptedModel::new(["VERDICT: UNCERTAIN\nhmm", "VERDICT: UNCERTAIN\nstill"]);
        let v = decide_checklist(&observations, &plan, &c, &m, &p, &cl).unwrap();
        assert_eq!(v.label, VeracityLabel::Real);
        assert_eq!(v.strategy, Strategy::MajorityVote);
        assert!(v.reasoning.contains("falling back to majority vote"));
    }

    #[test]
    fn checklist_parse() {
        let cl =
            Checklist::parse("# mine\nphrase: Is it clickbait?\nURL_tool: Bad site?\n").unwrap();
        assert_eq!(cl.criterion(Phrase), "Is it clickbait?");
        assert_eq!(cl.criterion(Url), "Bad site?");
        assert_eq!(cl.criterion(Search), Checklist::default().criterion(Search));
        assert_eq!(Checklist::parse("oops").unwrap_err().line, 1);
        assert_eq!(Checklist::parse("\nWizard: x").unwrap_err().line, 2);
    }

    #[test]
    fn nine_calls_for_political_claim_with_domain() {
        let c = claim(true);
        let m = ScriptedModel::new([
            "ANSWER: POLITICAL\nabout a senator",
            "VERDICT: FAKE\nteaser",
            "VERDICT: REAL\nclean",
            "VERDICT: FAKE\nimplausible",
            "VERDICT: FAKE\npartisan",
            "Example.org is a small blog.",
            "VERDICT: UNCERTAIN\nno history",
            "VERDICT: FAKE\nothers deny it",
            "VERDICT: FAKE\nmost checklist items violated",
        ]);
        let (p, cl, s) = (
            PromptSet::default(),
            Checklist::default(),
            MemoryDomainStore::new(),
        );
        let svc = services(&m, &FixedResults, &s, &p, &cl);
        let v = verify_claim(&c, &svc, &EngineConfig::default()).unwrap();
        assert_eq!(v.llm_calls, 9);
        assert_eq!(m.calls(), 9);
        assert_eq!(v.verdict.label, VeracityLabel::Fake);
        assert_eq!(
            v.verdict.plan.steps,
            [Phrase, Language, Commonsense, Standing, Url, Search]
        );
        assert_eq!(
            v.domain_overview.as_deref(),
            Some("Example.org is a small blog.")
        );
    }

    #[test]
    fn budget_exhaustion_aborts() {
        let c = claim(true);
        let m = ScriptedModel::new(["ANSWER: NOT_POLITICAL\nx", "VERDICT: FAKE\nteaser"]);
        let (p, cl, s) = (
            PromptSet::default(),
            Checklist::default(),
            MemoryDomainStore::new(),
        );
        let svc = services(&m, &NoResults, &s, &p, &cl);
        let cfg = EngineConfig {
            call_budget: 2,
            ..EngineConfig::default()
        };
        let err = verify_claim(&c, &svc, &cfg).unwrap_err();
        assert!(err.is_budget_exhausted());
        assert_eq!(m.calls(), 2);
    }

    fn signal_strategy() -> impl proptest::strategy::Strategy<Value = Signal> {
        prop_oneof![
            Just(Signal::SupportsReal),
            Just(Signal::SupportsFake),
            Just(Signal::Inconclusive)
        ]
    }

    proptest! {
        #[test]
        fn majority_permutation_invariant(signals in proptest::collection::vec(signal_strategy(), 1..10), seed in any::<u64>()) {
            let plan = plan_expert(&claim(true), &politics(true), &ToolSwitches::default()).unwrap();
            let observations: Vec<_> = signals.iter().map(|&s| obs(Phrase, s)).collect();
            let mut shuffled = observations.clone();
            // Deterministic rotation + reversal as the permutation.
            let k = (seed as usize) % shuffled.len();
            shuffled.rotate_left(k);
            if seed % 2 == 0 { shuffled.reverse(); }
            prop_assert_eq!(
                decide_majority(&observations, &plan).unwrap().label,
                decide_majority(&shuffled, &plan).unwrap().label
            );
        }

        #[test]
        fn majority_monotone(signals in proptest::collection::vec(signal_strategy(), 1..10)) {
            let plan = plan_expert(&claim(true), &politics(true), &ToolSwitches::default()).unwrap();
            let observations: Vec<_> = signals.iter().map(|&s| obs(Phrase, s)).collect();
            let before = decide_majority(&observations, &plan).unwrap().label;
            for i in 0..observations.len() {
                if observations[i].signal == Signal::Inconclusive {
                    let mut flipped = observations.clone();
                    flipped[i] = obs(Phrase, Signal::SupportsFake);
                    let after = decide_majority(&flipped, &plan).unwrap().label;
                    prop_assert!(!(before == VeracityLabel::Fake && after == VeracityLabel::Real));
                }
            }
        }

        #[test]
        fn execute_preserves_order(mask in 1u32..64, political: bool) {
            let c = claim(true);
            let steps: Vec<ToolKind> = ToolKind::ALL
                .into_iter()
                .enumerate()
                .filter(|(i, k)| mask & (1 << i) != 0 && (*k != Standing || political))
                .map(|(_, k)| k)
                .collect();
            prop_assume!(!steps.is_empty());
            let plan = WorkflowPlan { steps: steps.clone(), mode: Mode::SelfDesigned, politics: politics(political) };
            let m = ScriptedModel::new(core::iter::repeat_n("overview or\nVERDICT: REAL", 12));
            let (p, cl, s) = (PromptSet::default(), Checklist::default(), MemoryDomainStore::new());
            let svc = services(&m, &FixedResults, &s, &p, &cl);
            let out = execute(&plan, &c, &svc, 8).unwrap();
            let kinds: Vec<_> = out.observations.iter().map(|o| o.tool).collect();
            prop_assert_eq!(kinds, steps);
        }
    }
}
