//! Tools backed by external knowledge: date-restricted web search for
//! conflicting coverage, and source-domain credibility backed by a store of
//! past verifications.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::claim::{normalize_domain, render_descriptor, NewsClaim, VeracityLabel};
use crate::llm::ChatModel;
use crate::tools::{
    exchange, PromptSet, TemplateKey, ToolError, ToolKind, ToolObservation, VERDICT_REPROMPT,
};

pub const DEFAULT_MAX_RESULTS: usize = 8;
pub const NO_COVERAGE_RATIONALE: &str = "no corroborating or conflicting coverage found";
pub const NO_HISTORY: &str = "no prior verification history";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvidenceError {
    #[error("search failed: {0}")]
    SearchTransport(String),
    #[error("claim has no domain URL")]
    MissingDomain,
    #[error("domain store: {0}")]
    Store(String),
    #[error(transparent)]
    Tool(#[from] ToolError),
}

impl EvidenceError {
    pub fn is_budget_exhausted(&self) -> bool {
        matches!(self, EvidenceError::Tool(e) if e.is_budget_exhausted())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchQuery {
    pub query_text: String,
    /// Exclusive upper bound on publication date.
    pub before_date: Option<NaiveDate>,
    pub max_results: usize,
}

impl SearchQuery {
    /// Query for a claim: the verbatim title, cut off at the claim's publish
    /// date when it has one.
    pub fn for_claim(claim: &NewsClaim, max_results: usize) -> Self {
        Self {
            query_text: claim.title().to_string(),
            before_date: claim.publish_date(),
            max_results: max_results.max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub title: String,
    pub snippet: String,
    pub source_url: String,
    #[serde(default)]
    pub published: Option<NaiveDate>,
}

/// A web search backend. Providers should apply `before_date` themselves;
/// results are re-filtered here regardless.
pub trait SearchProvider: Send + Sync {
    fn search(&self, query: &SearchQuery) -> Result<Vec<SearchResult>, EvidenceError>;
}

impl<P: SearchProvider + ?Sized> SearchProvider for &P {
    fn search(&self, query: &SearchQuery) -> Result<Vec<SearchResult>, EvidenceError> {
        (**self).search(query)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchFindings {
    pub results: Vec<SearchResult>,
    pub conflict_summary: String,
    pub observation: ToolObservation,
}

/// Drops results dated on or after the cutoff and caps the count. Undated
/// results are kept.
pub fn admissible_results(query: &SearchQuery, results: Vec<SearchResult>) -> Vec<SearchResult> {
    results
        .into_iter()
        .filter(|r| match (query.before_date, r.published) {
            (Some(cutoff), Some(published)) => published < cutoff,
            _ => true,
        })
        .take(query.max_results)
        .collect()
}

/// Numbered digest in provider order.
pub fn render_digest(results: &[SearchResult]) -> String {
    let mut out = String::new();
    for (i, r) in results.iter().enumerate() {
        let date = match r.published {
            Some(d) => format!("published {d}"),
            None => "undated".to_string(),
        };
        let _ = writeln!(out, "{}. {} ({date})", i + 1, r.title.trim());
        if !r.snippet.trim().is_empty() {
            let _ = writeln!(out, "   {}", r.snippet.trim());
        }
        if !r.source_url.trim().is_empty() {
            let _ = writeln!(out, "   {}", r.source_url.trim());
        }
    }
    out.trim_end().to_string()
}

/// Looks for coverage that conflicts with the claim. No model call is made
/// when the search comes back empty.
pub fn run_search_tool(
    claim: &NewsClaim,
    model: &dyn ChatModel,
    provider: &dyn SearchProvider,
    prompts: &PromptSet,
    max_results: usize,
) -> Result<SearchFindings, EvidenceError> {
    let query = SearchQuery::for_claim(claim, max_results);
    let results = admissible_results(&query, provider.search(&query)?);
    if results.is_empty() {
        return Ok(SearchFindings {
            results,
            conflict_summary: NO_COVERAGE_RATIONALE.to_string(),
            observation: ToolObservation::synthetic_inconclusive(
                ToolKind::Search,
                NO_COVERAGE_RATIONALE,
            ),
        });
    }
    let request = prompts.request(
        TemplateKey::Search,
        &render_descriptor(claim),
        &render_digest(&results),
    );
    let (observation, _) = exchange(model, request, VERDICT_REPROMPT, |raw| {
        ToolObservation::from_output(ToolKind::Search, raw)
    })?;
    Ok(SearchFindings {
        results,
        conflict_summary: observation.rationale.clone(),
        observation,
    })
}

/// Verification history of one source domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainRecord {
    pub domain: String,
    pub real_count: u64,
    pub fake_count: u64,
    pub last_updated: NaiveDate,
    #[serde(default)]
    pub llm_overview: Option<String>,
}

impl DomainRecord {
    pub fn new(domain: impl Into<String>, when: NaiveDate) -> Self {
        Self {
            domain: domain.into(),
            real_count: 0,
            fake_count: 0,
            last_updated: when,
            llm_overview: None,
        }
    }

    pub fn apply(&mut self, label: VeracityLabel, when: NaiveDate, overview: Option<&str>) {
        match label {
            VeracityLabel::Real => self.real_count += 1,
            VeracityLabel::Fake => self.fake_count += 1,
        }
        self.last_updated = when;
        if let Some(o) = overview {
            self.llm_overview = Some(o.to_string());
        }
    }
}

/// Store key for a domain.
pub fn domain_key(domain: &str) -> Result<String, EvidenceError> {
    normalize_domain(domain).map_err(|e| EvidenceError::Store(e.to_string()))
}

/// Persistent domain-credibility history. Writes are serialized by the
/// implementation; reads see a consistent snapshot.
pub trait DomainStore: Send + Sync {
    fn lookup(&self, domain: &str) -> Result<Option<DomainRecord>, EvidenceError>;

    /// Records one verified article for `domain`, optionally refreshing the
    /// stored overview.
    fn record(
        &self,
        domain: &str,
        label: VeracityLabel,
        when: NaiveDate,
        overview: Option<&str>,
    ) -> Result<DomainRecord, EvidenceError>;

    fn record_verification(
        &self,
        domain: &str,
        label: VeracityLabel,
        when: NaiveDate,
    ) -> Result<DomainRecord, EvidenceError> {
        self.record(domain, label, when, None)
    }
}

#[derive(Debug, Default)]
pub struct MemoryDomainStore {
    records: spin::RwLock<BTreeMap<String, DomainRecord>>,
}

impl MemoryDomainStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_records(records: impl IntoIterator<Item = DomainRecord>) -> Self {
        let store = Self::new();
        {
            let mut map = store.records.write();
            for r in records {
                map.insert(r.domain.clone(), r);
            }
        }
        store
    }

    pub fn snapshot(&self) -> Vec<DomainRecord> {
        self.records.read().values().cloned().collect()
    }
}

impl DomainStore for MemoryDomainStore {
    fn lookup(&self, domain: &str) -> Result<Option<DomainRecord>, EvidenceError> {
        Ok(self.records.read().get(&domain_key(domain)?).cloned())
    }

    fn record(
        &self,
        domain: &str,
        label: VeracityLabel,
        when: NaiveDate,
        overview: Option<&str>,
    ) -> Result<DomainRecord, EvidenceError> {
        let key = domain_key(domain)?;
        let mut map = self.records.write();
        let rec = map
            .entry(key.clone())
            .or_insert_with(|| DomainRecord::new(key, when));
        rec.apply(label, when, overview);
        Ok(rec.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrlFindings {
    pub overview: String,
    pub record: Option<DomainRecord>,
    pub observation: ToolObservation,
}

pub fn render_history(domain: &str, record: Option<&DomainRecord>) -> String {
    match record {
        Some(r) => format!(
            "Verification history for {domain}: {} article(s) verified real and {} verified fake, last updated {}.",
            r.real_count, r.fake_count, r.last_updated
        ),
        None => format!("Verification history for {domain}: {NO_HISTORY}."),
    }
}

/// Source credibility in two model calls: an overview of the domain from the
/// model's own knowledge, then a judgement combining that overview with the
/// stored verification history.
pub fn run_url_tool(
    claim: &NewsClaim,
    model: &dyn ChatModel,
    store: &dyn DomainStore,
    prompts: &PromptSet,
) -> Result<UrlFindings, EvidenceError> {
    let domain = claim.domain_url().ok_or(EvidenceError::MissingDomain)?;
    let descriptor = render_descriptor(claim);

    let overview_request = prompts.request(
        TemplateKey::UrlOverview,
        &descriptor,
        &format!("Domain URL: {domain}"),
    );
    let overview = model
        .complete(&overview_request)
        .map_err(ToolError::from)?
        .text
        .trim()
        .to_string();

    let record = store.lookup(domain)?;
    let evidence = format!(
        "Overview of {domain}:\n{}\n\n{}",
        if overview.is_empty() {
            "(none)"
        } else {
            &overview
        },
        render_history(domain, record.as_ref())
    );
    let request = prompts.request(TemplateKey::Url, &descriptor, &evidence);
    let (observation, _) = exchange(model, request, VERDICT_REPROMPT, |raw| {
        ToolObservation::from_output(ToolKind::Url, raw)
    })?;
    Ok(UrlFindings {
        overview,
        record,
        observation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedModel;
    use crate::tools::{parse_tool_output, Signal};
    use std::sync::Mutex;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[derive(Default)]
    struct Recording {
        results: Vec<SearchResult>,
        queries: Mutex<Vec<SearchQuery>>,
    }

    impl SearchProvider for Recording {
        fn search(&self, q: &SearchQuery) -> Result<Vec<SearchResult>, EvidenceError> {
            self.queries.lock().unwrap().push(q.clone());
            Ok(self.results.clone())
        }
    }

    fn result(title: &str, published: Option<NaiveDate>) -> SearchResult {
        SearchResult {
            title: title.into(),
            snippet: format!("{title} snippet"),
            source_url: format!("https://news.example/{}", title.len()),
            published,
        }
    }

    fn riverdale() -> NewsClaim {
        NewsClaim::new(
            "r",
            "Riverdale Set to Recast a Major Character Ahead of Season 2",
        )
        .unwrap()
        .with_domain("tvline.com")
        .unwrap()
        .with_date(date(2017, 4, 25))
    }

    #[test]
    fn search_query_carries_cutoff() {
        let p = Recording::default();
        let m = ScriptedModel::default();
        run_search_tool(&riverdale(), &m, &p, &PromptSet::default(), 8).unwrap();
        let q = p.queries.lock().unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!(q[0].before_date, Some(date(2017, 4, 25)));
        assert_eq!(q[0].query_text, riverdale().title());
        assert_eq!(q[0].max_results, 8);
    }

    #[test]
    fn empty_search_skips_model() {
        let p = Recording::default();
        let m = ScriptedModel::default();
        let f = run_search_tool(&riverdale(), &m, &p, &PromptSet::default(), 8).unwrap();
        assert_eq!(f.observation.signal, Signal::Inconclusive);
        assert_eq!(f.observation.rationale, NO_COVERAGE_RATIONALE);
        assert_eq!(m.calls(), 0);
        assert_eq!(
            parse_tool_output(&f.observation.raw_output).unwrap(),
            (Signal::Inconclusive, NO_COVERAGE_RATIONALE.to_string())
        );
    }

    #[test]
    fn search_digest_and_verdict() {
        let p = Recording {
            results: vec![
                result("First", Some(date(2017, 4, 20))),
                result("Second", None),
                result("Third", Some(date(2017, 3, 1))),
            ],
            ..Default::default()
        };
        let m = ScriptedModel::new(["VERDICT: FAKE\ntwo outlets report the opposite"]);
        let f = run_search_tool(&riverdale(), &m, &p, &PromptSet::default(), 8).unwrap();
        assert_eq!(f.observation.signal, Signal::SupportsFake);
        assert_eq!(f.observation.tool, ToolKind::Search);
        assert_eq!(f.conflict_summary, "two outlets report the opposite");
        assert_eq!(m.calls(), 1);
        let prompt = &m.transcript()[0].user_text;
        assert!(prompt.contains("1. First (published 2017-04-20)"));
        assert!(prompt.contains("2. Second (undated)"));
        assert!(prompt.contains("3. Third (published 2017-03-01)"));
    }

    #[test]
    fn leaked_results_are_dropped_client_side() {
        let p = Recording {
            results: vec![
                result("same day", Some(date(2017, 4, 25))),
                result("after", Some(date(2018, 1, 1))),
                result("before", Some(date(2017, 4, 24))),
            ],
            ..Default::default()
        };
        let m = ScriptedModel::new(["VERDICT: REAL\nconsistent"]);
        let f = run_search_tool(&riverdale(), &m, &p, &PromptSet::default(), 8).unwrap();
        assert_eq!(f.results.len(), 1);
        assert_eq!(f.results[0].title, "before");
    }

    #[test]
    fn search_caps_results() {
        let p = Recording {
            results: (0..20).map(|i| result(&format!("r{i}"), None)).collect(),
            ..Default::default()
        };
        let m = ScriptedModel::new(["VERDICT: REAL\nfine"]);
        let f = run_search_tool(&riverdale(), &m, &p, &PromptSet::default(), 3).unwrap();
        assert_eq!(f.results.len(), 3);
    }

    #[test]
    fn url_tool_with_history() {
        let store = MemoryDomainStore::new();
        for _ in 0..5 {
            store
                .record_verification("tvline.com", VeracityLabel::Real, date(2017, 1, 1))
                .unwrap();
        }
        let m = ScriptedModel::new([
            "TVLine is an entertainment news site.",
            "VERDICT: REAL\nestablished entertainment outlet, clean history",
        ]);
        let f = run_url_tool(&riverdale(), &m, &store, &PromptSet::default()).unwrap();
        assert_eq!(f.observation.signal, Signal::SupportsReal);
        assert_eq!(f.observation.tool, ToolKind::Url);
        assert_eq!(f.record.as_ref().unwrap().real_count, 5);
        assert_eq!(m.calls(), 2);
        let second = &m.transcript()[1].user_text;
        assert!(second.contains("TVLine is an entertainment news site."));
        assert!(second.contains("5 article(s) verified real and 0 verified fake"));
    }

    #[test]
    fn url_tool_unknown_domain() {
        let store = MemoryDomainStore::new();
        let m = ScriptedModel::new(["Unknown site.", "VERDICT: UNCERTAIN\nno history"]);
        let f = run_url_tool(&riverdale(), &m, &store, &PromptSet::default()).unwrap();
        assert_eq!(f.observation.signal, Signal::Inconclusive);
        assert!(m.transcript()[1].user_text.contains(NO_HISTORY));
    }

    #[test]
    fn url_tool_requires_domain() {
        let claim = NewsClaim::new("x", "No source").unwrap();
        let m = ScriptedModel::default();
        assert_eq!(
            run_url_tool(&claim, &m, &MemoryDomainStore::new(), &PromptSet::default()).unwrap_err(),
            EvidenceError::MissingDomain
        );
        assert_eq!(m.calls(), 0);
    }

    #[test]
    fn store_records_and_normalizes() {
        let store = MemoryDomainStore::new();
        let r = store
            .record_verification("x.com", VeracityLabel::Fake, date(2020, 1, 1))
            .unwrap();
        assert_eq!((r.real_count, r.fake_count), (0, 1));
        let r = store
            .record_verification("X.com", VeracityLabel::Fake, date(2020, 1, 2))
            .unwrap();
        assert_eq!((r.real_count, r.fake_count), (0, 2));
        assert_eq!(r.last_updated, date(2020, 1, 2));
        assert_eq!(store.lookup("TVLine.com").unwrap(), None);
        store
            .record_verification("tvline.com", VeracityLabel::Real, date(2020, 1, 1))
            .unwrap();
        assert_eq!(
            store.lookup("TVLine.com").unwrap(),
            store.lookup("tvline.com").unwrap()
        );
    }
}
