//! Verification tools that rely only on the model's own knowledge, the
//! politics gate, and the `VERDICT:` output protocol shared by every tool.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::claim::{render_descriptor, NewsClaim};
use crate::llm::{ChatModel, LlmError, PromptRequest, DEFAULT_MAX_OUTPUT_TOKENS, DEFAULT_MODEL_ID};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ToolKind {
    Phrase,
    Language,
    Commonsense,
    Standing,
    Search,
    Url,
}

impl ToolKind {
    pub const ALL: [ToolKind; 6] = [
        ToolKind::Phrase,
        ToolKind::Language,
        ToolKind::Commonsense,
        ToolKind::Standing,
        ToolKind::Search,
        ToolKind::Url,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ToolKind::Phrase => "Phrase",
            ToolKind::Language => "Language",
            ToolKind::Commonsense => "Commonsense",
            ToolKind::Standing => "Standing",
            ToolKind::Search => "Search",
            ToolKind::Url => "Url",
        }
    }

    /// Name as presented to the model and in reports, e.g. `Phrase_tool`.
    pub fn tool_name(self) -> &'static str {
        match self {
            ToolKind::Phrase => "Phrase_tool",
            ToolKind::Language => "Language_tool",
            ToolKind::Commonsense => "Commonsense_tool",
            ToolKind::Standing => "Standing_tool",
            ToolKind::Search => "Search_tool",
            ToolKind::Url => "URL_tool",
        }
    }

    pub fn is_internal(self) -> bool {
        matches!(
            self,
            ToolKind::Phrase | ToolKind::Language | ToolKind::Commonsense | ToolKind::Standing
        )
    }

    /// What the tool looks for, one line. Used by the planner prompt and as
    /// the default checklist criterion.
    pub fn summary(self) -> &'static str {
        match self {
            ToolKind::Phrase => "flags clickbait teasers, emotionally loaded wording and overstated assertions, which fabricated stories use to grab attention",
            ToolKind::Language => "flags grammar slips, odd word choices, misplaced quotation marks and shouty capitalisation, which fabricated stories use to look urgent or credible",
            ToolKind::Commonsense => "checks whether the claim is plausible and consistent with general knowledge, since fabricated stories often read like rumour and clash with well-known facts",
            ToolKind::Standing => "for political claims, checks whether the claim pushes one side instead of reporting facts, since fabricated political stories tend to confirm an audience's biases and cast opponents as villains",
            ToolKind::Search => "searches other outlets' coverage for conflicting reports, since fabricated stories tend to rest on unconfirmed details with little supporting coverage",
            ToolKind::Url => "judges the credibility of the source domain from general knowledge plus its verification history, since fabricated stories tend to come from unreliable sites",
        }
    }
}

impl fmt::Display for ToolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown tool {0:?}")]
pub struct UnknownTool(pub String);

impl FromStr for ToolKind {
    type Err = UnknownTool;

    /// Case-insensitive; accepts `Phrase`, `phrase_tool`, `URL`, `url-tool`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s
            .trim()
            .trim_matches(|c: char| c == '`' || c == '*' || c == '"' || c == '\'' || c == '.')
            .to_ascii_lowercase();
        let key = key
            .strip_suffix("_tool")
            .or_else(|| key.strip_suffix("-tool"))
            .or_else(|| key.strip_suffix(" tool"))
            .unwrap_or(&key);
        ToolKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(key))
            .ok_or_else(|| UnknownTool(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    SupportsReal,
    SupportsFake,
    Inconclusive,
}

impl Signal {
    pub fn as_str(self) -> &'static str {
        match self {
            Signal::SupportsReal => "supports real",
            Signal::SupportsFake => "supports fake",
            Signal::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One tool's contribution to a verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolObservation {
    pub tool: ToolKind,
    pub signal: Signal,
    pub rationale: String,
    pub raw_output: String,
}

impl ToolObservation {
    /// Builds an observation from model output. Fails when the output does not
    /// follow the `VERDICT:` protocol.
    pub fn from_output(tool: ToolKind, raw: &str) -> Result<Self, ToolError> {
        let (signal, rationale) = parse_tool_output(raw)?;
        Ok(Self {
            tool,
            signal,
            rationale,
            raw_output: raw.to_string(),
        })
    }

    /// An inconclusive observation that did not come from the model. The
    /// synthesized `raw_output` still parses back to the same signal and
    /// rationale.
    pub fn synthetic_inconclusive(tool: ToolKind, rationale: impl Into<String>) -> Self {
        let rationale = rationale.into();
        Self {
            tool,
            signal: Signal::Inconclusive,
            raw_output: format!("{rationale}\nVERDICT: UNCERTAIN"),
            rationale,
        }
    }

    /// Placeholder recorded when a tool could not produce a usable answer.
    pub fn failed(tool: ToolKind, error: &dyn fmt::Display) -> Self {
        let mut msg = format!("tool failed: {error}");
        // Keep the rationale on one line so it cannot smuggle in a verdict.
        msg = msg.replace(['\n', '\r'], " ");
        Self::synthetic_inconclusive(tool, msg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoliticsFlag {
    pub is_political: bool,
    pub rationale: String,
}

impl PoliticsFlag {
    pub fn new(is_political: bool, rationale: impl Into<String>) -> Self {
        Self {
            is_political,
            rationale: rationale.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ToolError {
    #[error("unparsable model output: {raw:?}")]
    UnparsableOutput { raw: String },
    #[error("{0} is not an internal-knowledge tool")]
    NotInternal(ToolKind),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

impl ToolError {
    pub fn is_budget_exhausted(&self) -> bool {
        matches!(self, ToolError::Llm(LlmError::BudgetExceeded { .. }))
    }
}

/// Finds the last line of the form `<TAG>: <token>` (case-insensitive,
/// optional trailing period) whose token is in `tokens`. Returns the token
/// index and the remaining text, trimmed.
pub(crate) fn find_tagged_line(raw: &str, tag: &str, tokens: &[&str]) -> Option<(usize, String)> {
    let lines: Vec<&str> = raw.lines().collect();
    let (line_idx, token_idx) = lines.iter().enumerate().rev().find_map(|(i, line)| {
        let line = line.trim().trim_matches('*').trim();
        let head = line.get(..tag.len())?;
        if !head.eq_ignore_ascii_case(tag) {
            return None;
        }
        let rest = line[tag.len()..].trim_start().strip_prefix(':')?;
        let value = rest.trim().trim_end_matches('.').trim();
        let value = value.trim_matches('*').trim();
        tokens
            .iter()
            .position(|t| t.eq_ignore_ascii_case(value))
            .map(|t| (i, t))
    })?;
    let mut rest = String::new();
    for (i, line) in lines.iter().enumerate() {
        if i == line_idx {
            continue;
        }
        if !rest.is_empty() {
            rest.push('\n');
        }
        rest.push_str(line);
    }
    Some((token_idx, rest.trim().to_string()))
}

/// Reads a tool reply: the last `VERDICT: REAL|FAKE|UNCERTAIN` line gives the
/// signal and the rest of the text is the rationale, which must not be empty.
pub fn parse_tool_output(raw: &str) -> Result<(Signal, String), ToolError> {
    const TOKENS: [&str; 3] = ["REAL", "FAKE", "UNCERTAIN"];
    let unparsable = || ToolError::UnparsableOutput {
        raw: raw.to_string(),
    };
    let (token, rationale) = find_tagged_line(raw, "VERDICT", &TOKENS).ok_or_else(unparsable)?;
    if rationale.is_empty() {
        return Err(unparsable());
    }
    let signal = match token {
        0 => Signal::SupportsReal,
        1 => Signal::SupportsFake,
        _ => Signal::Inconclusive,
    };
    Ok((signal, rationale))
}

pub fn parse_politics_output(raw: &str) -> Result<PoliticsFlag, ToolError> {
    const TOKENS: [&str; 3] = ["POLITICAL", "NOT_POLITICAL", "NOT POLITICAL"];
    let (token, rationale) =
        find_tagged_line(raw, "ANSWER", &TOKENS).ok_or_else(|| ToolError::UnparsableOutput {
            raw: raw.to_string(),
        })?;
    Ok(PoliticsFlag::new(token == 0, rationale))
}

pub const VERDICT_REPROMPT: &str =
    "Answer again ending with a line 'VERDICT: REAL|FAKE|UNCERTAIN'.";
pub const POLITICS_REPROMPT: &str =
    "Answer again ending with a line 'ANSWER: POLITICAL|NOT_POLITICAL'.";

/// Sends `request`; if `parse` rejects the reply, sends it once more with
/// `reprompt` appended. Returns the parsed value and the raw reply it came
/// from.
pub(crate) fn exchange<T>(
    model: &dyn ChatModel,
    request: PromptRequest,
    reprompt: &str,
    parse: impl Fn(&str) -> Result<T, ToolError>,
) -> Result<(T, String), ToolError> {
    let first = model.complete(&request)?.text;
    if let Ok(v) = parse(&first) {
        return Ok((v, first));
    }
    let mut retry = request;
    retry.user_text.push_str("\n\n");
    retry.user_text.push_str(reprompt);
    let second = model.complete(&retry)?.text;
    let value = parse(&second)?;
    Ok((value, second))
}

/// Identifies a prompt template. Each has a default body and can be replaced
/// from a template directory (`<file_stem>.txt`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateKey {
    Politics,
    Phrase,
    Language,
    Commonsense,
    Standing,
    Search,
    UrlOverview,
    Url,
    Planner,
    Checklist,
}

impl TemplateKey {
    pub const ALL: [TemplateKey; 10] = [
        TemplateKey::Politics,
        TemplateKey::Phrase,
        TemplateKey::Language,
        TemplateKey::Commonsense,
        TemplateKey::Standing,
        TemplateKey::Search,
        TemplateKey::UrlOverview,
        TemplateKey::Url,
        TemplateKey::Planner,
        TemplateKey::Checklist,
    ];

    pub fn file_stem(self) -> &'static str {
        match self {
            TemplateKey::Politics => "politics",
            TemplateKey::Phrase => "phrase",
            TemplateKey::Language => "language",
            TemplateKey::Commonsense => "commonsense",
            TemplateKey::Standing => "standing",
            TemplateKey::Search => "search",
            TemplateKey::UrlOverview => "url_overview",
            TemplateKey::Url => "url",
            TemplateKey::Planner => "planner",
            TemplateKey::Checklist => "checklist",
        }
    }

    pub fn for_tool(kind: ToolKind) -> TemplateKey {
        match kind {
            ToolKind::Phrase => TemplateKey::Phrase,
            ToolKind::Language => TemplateKey::Language,
            ToolKind::Commonsense => TemplateKey::Commonsense,
            ToolKind::Standing => TemplateKey::Standing,
            ToolKind::Search => TemplateKey::Search,
            ToolKind::Url => TemplateKey::Url,
        }
    }

    pub fn default_body(self) -> &'static str {
        match self {
            TemplateKey::Politics => include_str!("templates/politics.txt"),
            TemplateKey::Phrase => include_str!("templates/phrase.txt"),
            TemplateKey::Language => include_str!("templates/language.txt"),
            TemplateKey::Commonsense => include_str!("templates/commonsense.txt"),
            TemplateKey::Standing => include_str!("templates/standing.txt"),
            TemplateKey::Search => include_str!("templates/search.txt"),
            TemplateKey::UrlOverview => include_str!("templates/url_overview.txt"),
            TemplateKey::Url => include_str!("templates/url.txt"),
            TemplateKey::Planner => include_str!("templates/planner.txt"),
            TemplateKey::Checklist => include_str!("templates/checklist.txt"),
        }
    }
}

pub const DEFAULT_SYSTEM_TEXT: &str =
    "You are a meticulous fact-checking assistant. Follow the requested output format exactly.";

/// Prompt templates plus the model settings every request is built with.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    templates: alloc::collections::BTreeMap<TemplateKey, String>,
    pub system_text: String,
    pub model_id: String,
    pub temperature: f32,
    pub max_output_tokens: u32,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            templates: TemplateKey::ALL
                .into_iter()
                .map(|k| (k, k.default_body().to_string()))
                .collect(),
            system_text: DEFAULT_SYSTEM_TEXT.to_string(),
            model_id: DEFAULT_MODEL_ID.to_string(),
            temperature: 0.0,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }
}

impl PromptSet {
    pub fn set_template(&mut self, key: TemplateKey, body: impl Into<String>) {
        self.templates.insert(key, body.into());
    }

    pub fn template(&self, key: TemplateKey) -> &str {
        &self.templates[&key]
    }

    /// Substitutes `{descriptor}` and `{evidence}`.
    pub fn render(&self, key: TemplateKey, descriptor: &str, evidence: &str) -> String {
        self.template(key)
            .replace("{descriptor}", descriptor)
            .replace("{evidence}", evidence)
    }

    pub fn request(&self, key: TemplateKey, descriptor: &str, evidence: &str) -> PromptRequest {
        PromptRequest {
            system_text: self.system_text.clone(),
            user_text: self.render(key, descriptor, evidence),
            temperature: self.temperature,
            model_id: self.model_id.clone(),
            max_output_tokens: self.max_output_tokens,
        }
    }
}

/// Politics gate: decides whether the Standing tool applies.
pub fn classify_politics(
    claim: &NewsClaim,
    model: &dyn ChatModel,
    prompts: &PromptSet,
) -> Result<PoliticsFlag, ToolError> {
    let request = prompts.request(TemplateKey::Politics, &render_descriptor(claim), "");
    exchange(model, request, POLITICS_REPROMPT, parse_politics_output).map(|(flag, _)| flag)
}

/// Runs one of Phrase, Language, Commonsense or Standing. The tool sees only
/// the claim descriptor.
pub fn run_internal_tool(
    kind: ToolKind,
    claim: &NewsClaim,
    model: &dyn ChatModel,
    prompts: &PromptSet,
) -> Result<ToolObservation, ToolError> {
    if !kind.is_internal() {
        return Err(ToolError::NotInternal(kind));
    }
    let request = prompts.request(TemplateKey::for_tool(kind), &render_descriptor(claim), "");
    let (obs, _) = exchange(model, request, VERDICT_REPROMPT, |raw| {
        ToolObservation::from_output(kind, raw)
    })?;
    Ok(obs)
}
