//! Core of the `verity` claim checker.
//!
//! Everything in here is pure: claims and labels, the chat-model abstraction
//! with a scripted model, the verification tools, the workflow planner and
//! executor, verdict strategies, and evaluation metrics. IO (HTTP providers,
//! the on-disk domain store, dataset files, the CLI) lives in the `verity`
//! crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod claim;
pub mod evidence;
pub mod llm;
pub mod metrics;
pub mod report;
pub mod sampling;
pub mod tools;
pub mod workflow;

pub use claim::{
    normalize_domain, normalize_label, parse_publish_date, render_descriptor, ClaimError,
    DatasetRecord, NewsClaim, RecordSource, VeracityLabel,
};
pub use evidence::{
    run_search_tool, run_url_tool, DomainRecord, DomainStore, EvidenceError, MemoryDomainStore,
    SearchFindings, SearchProvider, SearchQuery, SearchResult,
};
pub use llm::{
    CallBudget, ChatModel, CompletionResult, LlmError, PromptRequest, RetryPolicy, Retrying,
    ScriptedModel,
};
pub use metrics::{compute_metrics, tool_usage_frequency, Confusion, MetricScores};
pub use sampling::{sample_test_set, RatioConstraint, SamplingError, SamplingSpec};
pub use tools::{
    classify_politics, parse_tool_output, run_internal_tool, PoliticsFlag, PromptSet, Signal,
    ToolError, ToolKind, ToolObservation,
};
pub use workflow::{
    decide_checklist, decide_majority, execute, plan_expert, plan_self_designed, verify_claim,
    Checklist, EngineConfig, FinalVerdict, Mode, Services, Strategy, ToolSwitches, Verification,
    WorkflowError, WorkflowPlan,
};
