//! Providers that never touch the network: canned search results keyed by
//! query text, and per-claim scripted models.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use verity_core::llm::ScriptBook;
use verity_core::{
    ChatModel, EvidenceError, ScriptedModel, SearchProvider, SearchQuery, SearchResult,
};

use crate::FileError;

/// Search that always comes back empty.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoSearch;

impl SearchProvider for NoSearch {
    fn search(&self, _: &SearchQuery) -> Result<Vec<SearchResult>, EvidenceError> {
        Ok(Vec::new())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FixtureLine {
    query: String,
    results: Vec<SearchResult>,
}

/// Canned results keyed by exact query text. Unknown queries return nothing.
/// Every query is logged so tests can inspect what was asked.
#[derive(Debug, Default)]
pub struct FixtureSearch {
    results: BTreeMap<String, Vec<SearchResult>>,
    queries: Mutex<Vec<SearchQuery>>,
}

impl FixtureSearch {
    pub fn new(results: BTreeMap<String, Vec<SearchResult>>) -> Self {
        Self {
            results,
            queries: Mutex::new(Vec::new()),
        }
    }

    /// JSON Lines of `{"query": ..., "results": [...]}`.
    pub fn parse(text: &str) -> Result<Self, (usize, String)> {
        let mut results = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureLine =
                serde_json::from_str(line).map_err(|e| (i + 1, e.to_string()))?;
            results.insert(entry.query, entry.results);
        }
        Ok(Self::new(results))
    }

    pub fn load(path: &Path) -> Result<Self, FileError> {
        let text = crate::read_file(path)?;
        Self::parse(&text).map_err(|(line, reason)| FileError::format(path, line, reason))
    }

    pub fn queries(&self) -> Vec<SearchQuery> {
        self.queries.lock().unwrap().clone()
    }
}

impl SearchProvider for FixtureSearch {
    fn search(&self, query: &SearchQuery) -> Result<Vec<SearchResult>, EvidenceError> {
        self.queries.lock().unwrap().push(query.clone());
        Ok(self
            .results
            .get(&query.query_text)
            .cloned()
            .unwrap_or_default())
    }
}

/// Hands out the model to use for each claim.
pub trait ModelSource: Send + Sync {
    fn model_for(&self, claim_id: &str) -> Arc<dyn ChatModel>;
}

impl<S: ModelSource + ?Sized> ModelSource for Box<S> {
    fn model_for(&self, claim_id: &str) -> Arc<dyn ChatModel> {
        (**self).model_for(claim_id)
    }
}

impl<S: ModelSource + ?Sized> ModelSource for &S {
    fn model_for(&self, claim_id: &str) -> Arc<dyn ChatModel> {
        (**self).model_for(claim_id)
    }
}

/// The same model for every claim.
pub struct SharedModel(pub Arc<dyn ChatModel>);

impl ModelSource for SharedModel {
    fn model_for(&self, _: &str) -> Arc<dyn ChatModel> {
        self.0.clone()
    }
}

/// A fresh scripted model per claim from its section of the script, or the
/// shared queue for claims without one. Per-claim sections keep parallel
/// runs deterministic.
pub struct ScriptSource {
    book: ScriptBook,
    shared: Arc<ScriptedModel>,
    issued: Mutex<Vec<(String, Arc<ScriptedModel>)>>,
}

impl ScriptSource {
    pub fn new(book: ScriptBook) -> Self {
        let shared = Arc::new(ScriptedModel::new(book.shared.clone()));
        Self {
            book,
            shared,
            issued: Mutex::new(Vec::new()),
        }
    }

    pub fn load(path: &Path) -> Result<Self, FileError> {
        let text = crate::read_file(path)?;
        let book = ScriptBook::parse(&text)
            .map_err(|e| FileError::format(path, e.line, e.reason.to_string()))?;
        Ok(Self::new(book))
    }

    /// Models handed out so far, keyed by claim id, for transcript dumps.
    pub fn issued(&self) -> Vec<(String, Arc<ScriptedModel>)> {
        self.issued.lock().unwrap().clone()
    }

    pub fn shared(&self) -> &Arc<ScriptedModel> {
        &self.shared
    }
}

impl ModelSource for ScriptSource {
    fn model_for(&self, claim_id: &str) -> Arc<dyn ChatModel> {
        match self.book.responses_for(claim_id) {
            Some(responses) => {
                let model = Arc::new(ScriptedModel::new(responses.iter().cloned()));
                self.issued
                    .lock()
                    .unwrap()
                    .push((claim_id.to_string(), model.clone()));
                model
            }
            None => self.shared.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use verity_core::PromptRequest;

    #[test]
    fn fixture_lookup_by_query() {
        let s = FixtureSearch::parse(
            "{\"query\":\"q1\",\"results\":[{\"title\":\"t\",\"snippet\":\"s\",\"source_url\":\"u\",\"published\":\"2020-01-01\"}]}\n\n",
        )
        .unwrap();
        let q = |t: &str| SearchQuery {
            query_text: t.into(),
            before_date: None,
            max_results: 3,
        };
        assert_eq!(s.search(&q("q1")).unwrap().len(), 1);
        assert!(s.search(&q("other")).unwrap().is_empty());
        assert_eq!(s.queries().len(), 2);
        assert_eq!(FixtureSearch::parse("{bad").unwrap_err().0, 1);
    }

    #[test]
    fn sections_get_own_queue() {
        let book = ScriptBook::parse("shared reply\n@@ a\nfirst a\n").unwrap();
        let source = ScriptSource::new(book);
        let req = PromptRequest::new("s", "u");
        assert_eq!(
            source.model_for("a").complete(&req).unwrap().text,
            "first a"
        );
        assert_eq!(
            source.model_for("a").complete(&req).unwrap().text,
            "first a"
        );
        assert_eq!(
            source.model_for("zz").complete(&req).unwrap().text,
            "shared reply"
        );
        assert!(source.model_for("zz").complete(&req).is_err());
    }
}
