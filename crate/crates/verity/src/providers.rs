//! Network-backed providers: an OpenAI-compatible chat-completions client
//! and a SerpApi search client. Credentials come from the environment and
//! are never logged.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crate::offline::ModelSource;
use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use verity_core::{
    ChatModel, CompletionResult, EvidenceError, LlmError, PromptRequest, SearchProvider,
    SearchQuery, SearchResult,
};

pub const DEFAULT_CHAT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const CHAT_KEY_VAR: &str = "OPENAI_API_KEY";
pub const DEFAULT_SEARCH_ENDPOINT: &str = "https://serpapi.com/search.json";
pub const SEARCH_KEY_VAR: &str = "SERPAPI_API_KEY";

#[derive(Debug, thiserror::Error)]
#[error("environment variable {0} is not set")]
pub struct MissingCredential(pub &'static str);

pub fn credential(var: &'static str) -> Result<String, MissingCredential> {
    match std::env::var(var) {
        Ok(v) if !v.trim().is_empty() => Ok(v.trim().to_string()),
        _ => Err(MissingCredential(var)),
    }
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

/// Maps a non-success HTTP status to the error taxonomy.
pub fn status_error(status: u16, body: &str) -> LlmError {
    let detail = format!(
        "HTTP {status}: {}",
        body.chars().take(300).collect::<String>()
    );
    match status {
        401 | 403 => LlmError::Authentication(format!("HTTP {status}")),
        429 => LlmError::RateLimited(detail),
        400..=499 => LlmError::ProviderRejection(detail),
        _ => LlmError::Transport(detail),
    }
}

pub fn chat_request_body(request: &PromptRequest) -> Value {
    json!({
        "model": request.model_id,
        "temperature": request.temperature,
        "max_tokens": request.max_output_tokens,
        "messages": [
            {"role": "system", "content": request.system_text},
            {"role": "user", "content": request.user_text},
        ],
    })
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Extracts the first choice. Empty content is only accepted when the
/// provider reports truncation.
pub fn parse_chat_reply(body: &str) -> Result<CompletionResult, LlmError> {
    let reply: ChatReply = serde_json::from_str(body)
        .map_err(|e| LlmError::ProviderRejection(format!("malformed reply: {e}")))?;
    let choice = reply
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| LlmError::ProviderRejection("reply has no choices".into()))?;
    let truncated = choice.finish_reason.as_deref() == Some("length");
    let text = choice.message.content.unwrap_or_default();
    if text.trim().is_empty() && !truncated {
        return Err(LlmError::ProviderRejection("empty completion".into()));
    }
    Ok(CompletionResult {
        text,
        provider_latency: Duration::ZERO,
        truncated,
    })
}

pub struct ChatCompletionsClient {
    agent: ureq::Agent,
    endpoint: String,
    api_key: String,
}

impl ChatCompletionsClient {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Self {
        Self {
            agent: agent(timeout),
            endpoint: endpoint.into(),
            api_key: api_key.into(),
        }
    }
}

impl ChatModel for ChatCompletionsClient {
    fn complete(&self, request: &PromptRequest) -> Result<CompletionResult, LlmError> {
        request.validate()?;
        let started = Instant::now();
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(chat_request_body(request))
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(status_error(status, &body));
        }
        let mut result = parse_chat_reply(&body)?;
        result.provider_latency = started.elapsed();
        Ok(result)
    }
}

/// One recorded model exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub claim_id: String,
    pub request: PromptRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Recorded {
    claim_id: String,
    inner: Arc<dyn ChatModel>,
    log: Arc<Mutex<Vec<Exchange>>>,
}

impl ChatModel for Recorded {
    fn complete(&self, request: &PromptRequest) -> Result<CompletionResult, LlmError> {
        let result = self.inner.complete(request);
        let (reply, error) = match &result {
            Ok(r) => (Some(r.text.clone()), None),
            Err(e) => (None, Some(e.to_string())),
        };
        self.log.lock().unwrap().push(Exchange {
            claim_id: self.claim_id.clone(),
            request: request.clone(),
            reply,
            error,
        });
        result
    }
}

/// Opt-in transcript recording around any model source.
pub struct RecordingSource<S> {
    inner: S,
    log: Arc<Mutex<Vec<Exchange>>>,
}

impl<S: ModelSource> RecordingSource<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            log: Arc::default(),
        }
    }

    /// Exchanges grouped by claim id, in call order within each claim.
    pub fn exchanges(&self) -> Vec<Exchange> {
        let mut all = self.log.lock().unwrap().clone();
        all.sort_by(|a, b| a.claim_id.cmp(&b.claim_id));
        all
    }
}

impl<S: ModelSource> ModelSource for RecordingSource<S> {
    fn model_for(&self, claim_id: &str) -> Arc<dyn ChatModel> {
        Arc::new(Recorded {
            claim_id: claim_id.to_string(),
            inner: self.inner.model_for(claim_id),
            log: self.log.clone(),
        })
    }
}

/// Query parameters for SerpApi, without the key. The date bound is
/// inclusive on SerpApi's side, so the day before the cutoff is sent.
pub fn serpapi_params(query: &SearchQuery) -> Vec<(&'static str, String)> {
    let mut params = vec![
        ("engine", "google".to_string()),
        ("q", query.query_text.clone()),
        ("num", query.max_results.to_string()),
    ];
    if let Some(last) = query
        .before_date
        .and_then(|d| d.checked_sub_days(Days::new(1)))
    {
        params.push(("tbs", format!("cdr:1,cd_max:{}", last.format("%m/%d/%Y"))));
    }
    params
}

/// Best effort: result dates come in several human formats and relative
/// ones ("3 days ago") are left undated.
pub fn parse_result_date(raw: &str) -> Option<NaiveDate> {
    let raw = raw.trim();
    ["%b %d, %Y", "%B %d, %Y", "%Y-%m-%d", "%m/%d/%Y", "%d %b %Y"]
        .iter()
        .find_map(|f| NaiveDate::parse_from_str(raw, f).ok())
}

pub fn parse_serpapi_response(body: &Value) -> Result<Vec<SearchResult>, EvidenceError> {
    if let Some(err) = body.get("error").and_then(Value::as_str) {
        if err.contains("hasn't returned any results") {
            return Ok(Vec::new());
        }
        return Err(EvidenceError::SearchTransport(err.to_string()));
    }
    let organic = match body.get("organic_results").and_then(Value::as_array) {
        Some(list) => list,
        None => return Ok(Vec::new()),
    };
    let text = |v: &Value, key: &str| v.get(key).and_then(Value::as_str).unwrap_or("").to_string();
    Ok(organic
        .iter()
        .filter(|r| r.get("title").is_some())
        .map(|r| SearchResult {
            title: text(r, "title"),
            snippet: text(r, "snippet"),
            source_url: text(r, "link"),
            published: r
                .get("date")
                .and_then(Value::as_str)
                .and_then(parse_result_date),
        })
        .collect())
}

pub struct SerpApiSearch {
    agent: ureq::Agent,
    endpoint: String,
    api_key: String,
}

impl SerpApiSearch {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Self {
        Self {
            agent: agent(timeout),
            endpoint: endpoint.into(),
            api_key: api_key.into(),
        }
    }
}

impl SearchProvider for SerpApiSearch {
    fn search(&self, query: &SearchQuery) -> Result<Vec<SearchResult>, EvidenceError> {
        let transport = |e: ureq::Error| EvidenceError::SearchTransport(e.to_string());
        let mut response = self
            .agent
            .get(&self.endpoint)
            .query_pairs(serpapi_params(query))
            .query("api_key", &self.api_key)
            .call()
            .map_err(transport)?;
        let status = response.status().as_u16();
        let body: Value = response.body_mut().read_json().map_err(transport)?;
        if !(200..300).contains(&status) && body.get("error").is_none() {
            return Err(EvidenceError::SearchTransport(format!("HTTP {status}")));
        }
        parse_serpapi_response(&body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping() {
        assert!(matches!(status_error(401, ""), LlmError::Authentication(_)));
        assert!(matches!(status_error(403, ""), LlmError::Authentication(_)));
        assert!(matches!(status_error(429, ""), LlmError::RateLimited(_)));
        assert!(matches!(
            status_error(400, ""),
            LlmError::ProviderRejection(_)
        ));
        assert!(matches!(status_error(503, ""), LlmError::Transport(_)));
    }

    #[test]
    fn chat_reply_parsing() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"hi\nVERDICT: REAL"},"finish_reason":"stop"}]}"#;
        let r = parse_chat_reply(ok).unwrap();
        assert_eq!(r.text, "hi\nVERDICT: REAL");
        assert!(!r.truncated);
        let cut = r#"{"choices":[{"message":{"content":""},"finish_reason":"length"}]}"#;
        assert!(parse_chat_reply(cut).unwrap().truncated);
        let empty = r#"{"choices":[{"message":{"content":"  "},"finish_reason":"stop"}]}"#;
        assert!(matches!(
            parse_chat_reply(empty),
            Err(LlmError::ProviderRejection(_))
        ));
        assert!(parse_chat_reply(r#"{"choices":[]}"#).is_err());
    }

    #[test]
    fn request_body_shape() {
        let mut req = PromptRequest::new("sys", "user");
        req.max_output_tokens = 77;
        let body = chat_request_body(&req);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "user");
        assert_eq!(body["max_tokens"], 77);
        assert_eq!(body["temperature"], 0.0);
    }

    #[test]
    fn serpapi_date_bound_is_day_before_cutoff() {
        let q = SearchQuery {
            query_text: "x".into(),
            before_date: NaiveDate::from_ymd_opt(2020, 3, 1),
            max_results: 5,
        };
        let params = serpapi_params(&q);
        assert!(params.contains(&("tbs", "cdr:1,cd_max:02/29/2020".to_string())));
        let undated = SearchQuery {
            before_date: None,
            ..q
        };
        assert!(serpapi_params(&undated).iter().all(|(k, _)| *k != "tbs"));
    }

    #[test]
    fn serpapi_response_parsing() {
        let body = json!({"organic_results": [
            {"title": "A", "link": "https://a.example", "snippet": "s", "date": "Apr 20, 2017"},
            {"title": "B", "link": "https://b.example", "date": "3 days ago"},
        ]});
        let r = parse_serpapi_response(&body).unwrap();
        assert_eq!(r[0].published, NaiveDate::from_ymd_opt(2017, 4, 20));
        assert_eq!(r[1].published, None);
        assert_eq!(r[1].snippet, "");
        let none = json!({"error": "Google hasn't returned any results for this query."});
        assert!(parse_serpapi_response(&none).unwrap().is_empty());
        assert!(parse_serpapi_response(&json!({"error": "Invalid API key"})).is_err());
    }
}
