//! Chat-model abstraction, retry and budget wrappers, and the scripted model
//! used for deterministic runs.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};
use core::time::Duration;

use serde::{Deserialize, Serialize};

pub const DEFAULT_MODEL_ID: &str = "gpt-3.5-turbo";
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 512;
pub const DEFAULT_CALL_BUDGET: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("authentication failed: {0}")]
    Authentication(String),
    #[error("provider rejected request: {0}")]
    ProviderRejection(String),
    #[error("call budget of {limit} exhausted")]
    BudgetExceeded { limit: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(&'static str),
}

/// One single-shot system + user exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub system_text: String,
    pub user_text: String,
    pub temperature: f32,
    pub model_id: String,
    pub max_output_tokens: u32,
}

impl PromptRequest {
    pub fn new(system_text: impl Into<String>, user_text: impl Into<String>) -> Self {
        Self {
            system_text: system_text.into(),
            user_text: user_text.into(),
            temperature: 0.0,
            model_id: DEFAULT_MODEL_ID.to_string(),
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.user_text.trim().is_empty() {
            return Err(LlmError::InvalidRequest("user text is empty"));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest("temperature outside [0, 2]"));
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_output_tokens is zero"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub provider_latency: Duration,
    /// Set when the provider stopped at the output-token limit. Empty text is
    /// only legitimate when this is set.
    pub truncated: bool,
}

impl CompletionResult {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            provider_latency: Duration::ZERO,
            truncated: false,
        }
    }
}

/// A chat-completion backend. Implementations must tolerate concurrent calls.
pub trait ChatModel: Send + Sync {
    fn complete(&self, request: &PromptRequest) -> Result<CompletionResult, LlmError>;
}

impl<M: ChatModel + ?Sized> ChatModel for &M {
    fn complete(&self, request: &PromptRequest) -> Result<CompletionResult, LlmError> {
        (**self).complete(request)
    }
}

impl<M: ChatModel + ?Sized> ChatModel for Arc<M> {
    fn complete(&self, request: &PromptRequest) -> Result<CompletionResult, LlmError> {
        (**self).complete(request)
    }
}

impl<M: ChatModel + ?Sized> ChatModel for alloc::boxed::Box<M> {
    fn complete(&self, request: &PromptRequest) -> Result<CompletionResult, LlmError> {
        (**self).complete(request)
    }
}

fn transient(err: &LlmError) -> bool {
    matches!(err, LlmError::Transport(_) | LlmError::RateLimited(_))
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base: Duration,
    pub max_backoff: Duration,
    pub retryable: fn(&LlmError) -> bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            backoff_base: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
            retryable: transient,
        }
    }
}

impl RetryPolicy {
    /// Never retries.
    pub fn none() -> Self {
        Self {
            max_attempts: 1,
            ..Self::default()
        }
    }

    /// Delay before retry number `retry` (1-based): `base * 2^(retry-1)`,
    /// capped at `max_backoff`.
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u32
            .checked_shl(retry.saturating_sub(1))
            .unwrap_or(u32::MAX);
        self.backoff_base
            .checked_mul(factor)
            .unwrap_or(self.max_backoff)
            .min(self.max_backoff)
    }
}

/// Applies a [`RetryPolicy`] around another model. Sleeping is injected so the
/// wrapper stays usable without `std`.
pub struct Retrying<M> {
    inner: M,
    policy: RetryPolicy,
    sleep: fn(Duration),
}

impl<M: ChatModel> Retrying<M> {
    pub fn new(inner: M, policy: RetryPolicy, sleep: fn(Duration)) -> Self {
        Self {
            inner,
            policy,
            sleep,
        }
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }
}

impl<M: ChatModel> ChatModel for Retrying<M> {
    fn complete(&self, request: &PromptRequest) -> Result<CompletionResult, LlmError> {
        let attempts = self.policy.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match self.inner.complete(request) {
                Ok(done) => return Ok(done),
                Err(LlmError::Authentication(msg)) => return Err(LlmError::Authentication(msg)),
                Err(e) if attempt < attempts && (self.policy.retryable)(&e) => {
                    (self.sleep)(self.policy.backoff(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Caps the number of calls made through it. One budget is created per claim.
pub struct CallBudget<'a> {
    inner: &'a dyn ChatModel,
    limit: usize,
    used: AtomicUsize,
}

impl<'a> CallBudget<'a> {
    pub fn new(inner: &'a dyn ChatModel, limit: usize) -> Self {
        Self {
            inner,
            limit,
            used: AtomicUsize::new(0),
        }
    }

    pub fn used(&self) -> usize {
        self.used.load(Ordering::SeqCst).min(self.limit)
    }
}

impl ChatModel for CallBudget<'_> {
    fn complete(&self, request: &PromptRequest) -> Result<CompletionResult, LlmError> {
        let prior = self.used.fetch_add(1, Ordering::SeqCst);
        if prior >= self.limit {
            self.used.store(self.limit, Ordering::SeqCst);
            return Err(LlmError::BudgetExceeded { limit: self.limit });
        }
        self.inner.complete(request)
    }
}

/// Replays canned responses in FIFO order and records every request.
#[derive(Debug, Default)]
pub struct ScriptedModel {
    queue: spin::Mutex<VecDeque<String>>,
    transcript: spin::Mutex<Vec<PromptRequest>>,
}

impl ScriptedModel {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            queue: spin::Mutex::new(responses.into_iter().map(Into::into).collect()),
            transcript: spin::Mutex::new(Vec::new()),
        }
    }

    pub fn transcript(&self) -> Vec<PromptRequest> {
        self.transcript.lock().clone()
    }

    pub fn calls(&self) -> usize {
        self.transcript.lock().len()
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().len()
    }
}

impl ChatModel for ScriptedModel {
    fn complete(&self, request: &PromptRequest) -> Result<CompletionResult, LlmError> {
        // One lock over both so dequeue order equals transcript order.
        let mut transcript = self.transcript.lock();
        transcript.push(request.clone());
        match self.queue.lock().pop_front() {
            Some(text) => Ok(CompletionResult::text(text)),
            None => Err(LlmError::ProviderRejection("script exhausted".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("script line {line}: {reason}")]
pub struct ScriptParseError {
    pub line: usize,
    pub reason: &'static str,
}

/// A parsed script file: a shared response queue plus optional per-claim
/// queues.
///
/// Format: one response per line. `\n` encodes an embedded newline, `\\` a
/// backslash, `\#` and `\@` a literal `#` / `@`. Blank lines and lines
/// starting with `#` are ignored. A line `@@ <claim_id>` starts the section
/// for that claim; responses before the first section are shared.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScriptBook {
    pub shared: Vec<String>,
    pub per_claim: BTreeMap<String, Vec<String>>,
}

impl ScriptBook {
    pub fn parse(text: &str) -> Result<Self, ScriptParseError> {
        let mut book = ScriptBook::default();
        let mut section: Option<String> = None;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(id) = line.strip_prefix("@@") {
                let id = id.trim();
                if id.is_empty() {
                    return Err(ScriptParseError {
                        line: line_no,
                        reason: "section header without claim id",
                    });
                }
                book.per_claim.entry(id.to_string()).or_default();
                section = Some(id.to_string());
                continue;
            }
            let response = unescape(line).map_err(|reason| ScriptParseError {
                line: line_no,
                reason,
            })?;
            match &section {
                Some(id) => book.per_claim.entry(id.clone()).or_default().push(response),
                None => book.shared.push(response),
            }
        }
        Ok(book)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.shared {
            out.push_str(&escape(r));
            out.push('\n');
        }
        for (id, responses) in &self.per_claim {
            out.push_str("@@ ");
            out.push_str(id);
            out.push('\n');
            for r in responses {
                out.push_str(&escape(r));
                out.push('\n');
            }
        }
        out
    }

    /// Responses for one claim: its own section if present, else nothing.
    pub fn responses_for(&self, claim_id: &str) -> Option<&[String]> {
        self.per_claim.get(claim_id).map(Vec::as_slice)
    }
}

pub fn escape(response: &str) -> String {
    let mut out = String::with_capacity(response.len());
    for c in response.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '#' => out.push_str("\\#"),
            '@' => out.push_str("\\@"),
            '\r' => {}
            c => out.push(c),
        }
    }
    out
}

pub fn unescape(line: &str) -> Result<String, &'static str> {
    let mut out = String::with_capacity(line.len());
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('\\') => out.push('\\'),
            Some('#') => out.push('#'),
            Some('@') => out.push('@'),
            Some(_) => return Err("unknown escape sequence"),
            None => return Err("dangling backslash"),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::Mutex;

    fn req(text: &str) -> PromptRequest {
        PromptRequest::new("sys", text)
    }

    #[test]
    fn scripted_returns_queue_head() {
        let m = ScriptedModel::new(["VERDICT: FAKE\nuses ALL-CAPS"]);
        assert_eq!(
            m.complete(&req("anything")).unwrap().text,
            "VERDICT: FAKE\nuses ALL-CAPS"
        );
    }

    #[test]
    fn scripted_is_fifo_and_records() {
        let m = ScriptedModel::new(["a", "b"]);
        assert_eq!(m.complete(&req("1")).unwrap().text, "a");
        assert_eq!(m.transcript(), vec![req("1")]);
        assert_eq!(m.complete(&req("2")).unwrap().text, "b");
        assert_eq!(m.calls(), 2);
    }

    #[test]
    fn scripted_exhaustion() {
        let m = ScriptedModel::new(Vec::<String>::new());
        assert_eq!(
            m.complete(&req("x")).unwrap_err(),
            LlmError::ProviderRejection("script exhausted".into())
        );
    }

    #[test]
    fn request_defaults_and_validation() {
        let r = req("hi");
        assert_eq!(r.temperature, 0.0);
        assert_eq!(r.max_output_tokens, 512);
        assert!(r.validate().is_ok());
        assert!(req("  ").validate().is_err());
        let mut hot = req("x");
        hot.temperature = 2.5;
        assert!(hot.validate().is_err());
    }

    #[test]
    fn budget_caps_calls() {
        let m = ScriptedModel::new(["a", "b", "c"]);
        let b = CallBudget::new(&m, 2);
        assert!(b.complete(&req("1")).is_ok());
        assert!(b.complete(&req("2")).is_ok());
        assert_eq!(
            b.complete(&req("3")).unwrap_err(),
            LlmError::BudgetExceeded { limit: 2 }
        );
        assert_eq!(m.calls(), 2);
        assert_eq!(b.used(), 2);
    }

    /// Fails with the queued errors, then succeeds.
    struct Flaky {
        errors: Mutex<Vec<LlmError>>,
        calls: AtomicUsize,
    }

    impl ChatModel for Flaky {
        fn complete(&self, _: &PromptRequest) -> Result<CompletionResult, LlmError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            match self.errors.lock().unwrap().pop() {
                Some(e) => Err(e),
                None => Ok(CompletionResult::text("ok")),
            }
        }
    }

    static SLEPT: Mutex<Vec<Duration>> = Mutex::new(Vec::new());
    fn record_sleep(d: Duration) {
        SLEPT.lock().unwrap().push(d);
    }
    fn no_sleep(_: Duration) {}

    #[test]
    fn retries_transport_errors() {
        let flaky = Flaky {
            errors: Mutex::new(vec![
                LlmError::RateLimited("429".into()),
                LlmError::Transport("reset".into()),
            ]),
            calls: AtomicUsize::new(0),
        };
        let r = Retrying::new(flaky, RetryPolicy::default(), record_sleep);
        assert_eq!(r.complete(&req("x")).unwrap().text, "ok");
        assert_eq!(r.inner().calls.load(Ordering::SeqCst), 3);
        let slept = SLEPT.lock().unwrap().clone();
        assert_eq!(
            slept,
            vec![Duration::from_millis(500), Duration::from_millis(1000)]
        );
    }

    #[test]
    fn never_retries_authentication() {
        let flaky = Flaky {
            errors: Mutex::new(vec![LlmError::Authentication("401".into())]),
            calls: AtomicUsize::new(0),
        };
        let policy = RetryPolicy {
            retryable: |_| true,
            ..RetryPolicy::default()
        };
        let r = Retrying::new(flaky, policy, no_sleep);
        assert!(matches!(
            r.complete(&req("x")),
            Err(LlmError::Authentication(_))
        ));
        assert_eq!(r.inner().calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn gives_up_after_max_attempts() {
        let flaky = Flaky {
            errors: Mutex::new(vec![LlmError::Transport("down".into()); 10]),
            calls: AtomicUsize::new(0),
        };
        let r = Retrying::new(flaky, RetryPolicy::default(), no_sleep);
        assert!(matches!(r.complete(&req("x")), Err(LlmError::Transport(_))));
        assert_eq!(r.inner().calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn script_book_sections() {
        let text =
            "# comment\nshared one\n@@ c1\nVERDICT: FAKE\\nline two\n\n@@ c2\n\\# not a comment\n";
        let book = ScriptBook::parse(text).unwrap();
        assert_eq!(book.shared, vec!["shared one"]);
        assert_eq!(
            book.responses_for("c1").unwrap(),
            &["VERDICT: FAKE\nline two".to_string()]
        );
        assert_eq!(
            book.responses_for("c2").unwrap(),
            &["# not a comment".to_string()]
        );
        assert!(book.responses_for("c3").is_none());
        assert_eq!(ScriptBook::parse("bad \\q").unwrap_err().line, 1);
        assert!(ScriptBook::parse("@@   ").is_err());
    }

    proptest! {
        #[test]
        fn backoff_is_non_decreasing(base_ms in 1u64..5_000, cap_s in 1u64..120) {
            let policy = RetryPolicy {
                backoff_base: Duration::from_millis(base_ms),
                max_backoff: Duration::from_secs(cap_s),
                ..RetryPolicy::default()
            };
            let mut prev = Duration::ZERO;
            for retry in 1..40 {
                let d = policy.backoff(retry);
                prop_assert!(d >= prev);
                prop_assert!(d <= policy.max_backoff);
                prev = d;
            }
        }

        #[test]
        fn retry_count_bounded(max_attempts in 1u32..8, failures in 0usize..12) {
            let flaky = Flaky {
                errors: Mutex::new(vec![LlmError::Transport("x".into()); failures]),
                calls: AtomicUsize::new(0),
            };
            let policy = RetryPolicy { max_attempts, ..RetryPolicy::default() };
            let r = Retrying::new(flaky, policy, no_sleep);
            let out = r.complete(&req("x"));
            let calls = r.inner().calls.load(Ordering::SeqCst);
            prop_assert!(calls <= max_attempts as usize);
            prop_assert_eq!(out.is_ok(), failures < max_attempts as usize);
        }

        #[test]
        fn script_escape_round_trips(responses in proptest::collection::vec("[ -~\n\\\\#@]{1,40}", 0..6)) {
            let responses: Vec<String> = responses
                .into_iter()
                .filter(|r| !r.trim().is_empty())
                .collect();
            let book = ScriptBook { shared: responses, per_claim: BTreeMap::new() };
            prop_assert_eq!(ScriptBook::parse(&book.render()).unwrap(), book);
        }
    }
}
