//! Labeled claims in JSON Lines.
//!
//! Each line is an object with `title` and `label` and optional `id`, `url`,
//! `date` (MM/DD/YYYY or YYYY-MM-DD) and `source`. Labels may use any of the
//! fact-checker vocabularies understood by [`normalize_label`]; URLs are
//! reduced to their domain.

use std::collections::BTreeSet;
use std::path::Path;

use serde::Deserialize;
use verity_core::{
    normalize_domain, normalize_label, parse_publish_date, DatasetRecord, NewsClaim, RecordSource,
};

use crate::FileError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    #[serde(default)]
    id: Option<String>,
    title: String,
    label: String,
    #[serde(default)]
    url: Option<String>,
    #[serde(default)]
    date: Option<String>,
    #[serde(default)]
    source: Option<RecordSource>,
}

/// A line that was left out of a lenient load.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skipped {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedDataset {
    pub records: Vec<DatasetRecord>,
    pub skipped: Vec<Skipped>,
}

fn parse_line(text: &str, line_no: usize) -> Result<DatasetRecord, String> {
    let raw: RawLine = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let id = raw
        .id
        .filter(|s| !s.trim().is_empty())
        .unwrap_or_else(|| format!("line-{line_no:05}"));
    let mut claim = NewsClaim::new(id, raw.title).map_err(|e| e.to_string())?;
    if let Some(url) = raw.url.filter(|u| !u.trim().is_empty()) {
        let domain = normalize_domain(&url).map_err(|e| format!("url: {e}"))?;
        claim = claim
            .with_domain(&domain)
            .map_err(|e| format!("url: {e}"))?;
    }
    if let Some(date) = raw.date.filter(|d| !d.trim().is_empty()) {
        claim = claim.with_date(parse_publish_date(&date).map_err(|e| format!("date: {e}"))?);
    }
    let gold_label = normalize_label(&raw.label).map_err(|e| format!("label: {e}"))?;
    Ok(DatasetRecord {
        claim,
        gold_label,
        source: raw.source.unwrap_or_default(),
    })
}

/// Parses dataset text. In strict mode the first bad line is an error;
/// otherwise bad lines are skipped and reported.
pub fn parse_dataset(text: &str, strict: bool) -> Result<LoadedDataset, Skipped> {
    let mut out = LoadedDataset::default();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = parse_line(line, line_no).and_then(|rec| {
            if seen.insert(rec.claim.claim_id().to_string()) {
                Ok(rec)
            } else {
                Err(format!("duplicate id {:?}", rec.claim.claim_id()))
            }
        });
        match parsed {
            Ok(rec) => out.records.push(rec),
            Err(reason) => {
                let skipped = Skipped {
                    line: line_no,
                    reason,
                };
                if strict {
                    return Err(skipped);
                }
                out.skipped.push(skipped);
            }
        }
    }
    Ok(out)
}

pub fn load_dataset(path: &Path, strict: bool) -> Result<LoadedDataset, FileError> {
    let text = crate::read_file(path)?;
    parse_dataset(&text, strict).map_err(|s| FileError::format(path, s.line, s.reason))
}
