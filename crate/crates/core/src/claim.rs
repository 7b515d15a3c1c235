//! Claims, veracity labels and the claim descriptor text.

use alloc::format;
use alloc::string::{String, ToString};
use core::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClaimError {
    #[error("claim title is empty")]
    EmptyTitle,
    #[error("invalid domain {0:?}: expected a bare hostname")]
    InvalidDomain(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("invalid date {input:?} at position {position}: {reason}")]
    DateParse {
        input: String,
        position: usize,
        reason: &'static str,
    },
}

/// Binary veracity label. There is deliberately no "uncertain" value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VeracityLabel {
    Real,
    Fake,
}

impl VeracityLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            VeracityLabel::Real => "real",
            VeracityLabel::Fake => "fake",
        }
    }
}

impl fmt::Display for VeracityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for VeracityLabel {
    type Err = ClaimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        normalize_label(s)
    }
}

/// Maps PolitiFact-style six-way labels (and plain real/fake/true/false) onto
/// the binary label space. Case-insensitive; `_` and spaces count as `-`.
pub fn normalize_label(raw: &str) -> Result<VeracityLabel, ClaimError> {
    let key: String = raw
        .trim()
        .chars()
        .map(|c| match c {
            '_' | ' ' => '-',
            c => c.to_ascii_lowercase(),
        })
        .collect();
    match key.as_str() {
        "pants-fire" | "pants-on-fire" | "barely-true" | "false" | "fake" => {
            Ok(VeracityLabel::Fake)
        }
        "half-true" | "mostly-true" | "true" | "real" => Ok(VeracityLabel::Real),
        _ => Err(ClaimError::UnknownLabel(raw.to_string())),
    }
}

/// Parses `MM/DD/YYYY` or `YYYY-MM-DD`.
pub fn parse_publish_date(raw: &str) -> Result<NaiveDate, ClaimError> {
    let input = raw.trim();
    let us = input.contains('/');
    let pattern: &[u8] = if us { b"NN/NN/NNNN" } else { b"NNNN-NN-NN" };
    let err = |position, reason| ClaimError::DateParse {
        input: input.to_string(),
        position,
        reason,
    };

    let bytes = input.as_bytes();
    for (i, &want) in pattern.iter().enumerate() {
        let Some(&got) = bytes.get(i) else {
            return Err(err(i, "unexpected end of input"));
        };
        let ok = if want == b'N' {
            got.is_ascii_digit()
        } else {
            got == want
        };
        if !ok {
            return Err(err(
                i,
                if want == b'N' {
                    "expected a digit"
                } else {
                    "unexpected separator"
                },
            ));
        }
    }
    if bytes.len() > pattern.len() {
        return Err(err(pattern.len(), "trailing characters"));
    }

    let num = |from: usize, to: usize| -> u32 {
        bytes[from..to]
            .iter()
            .fold(0, |acc, b| acc * 10 + u32::from(b - b'0'))
    };
    let (year, month, day, month_pos, day_pos) = if us {
        (num(6, 10), num(0, 2), num(3, 5), 0, 3)
    } else {
        (num(0, 4), num(5, 7), num(8, 10), 5, 8)
    };
    if !(1..=12).contains(&month) {
        return Err(err(month_pos, "month out of range"));
    }
    NaiveDate::from_ymd_opt(year as i32, month, day).ok_or_else(|| err(day_pos, "day out of range"))
}

/// `MM/DD/YYYY`, the form used inside claim descriptors.
pub fn format_us_date(date: NaiveDate) -> String {
    format!("{:02}/{:02}/{:04}", date.month(), date.day(), date.year())
}

/// Reduces a URL or host to the bare lower-case hostname used as the
/// domain key: scheme, credentials, port, path, query, a trailing dot and
/// a leading `www.` are stripped.
pub fn normalize_domain(raw: &str) -> Result<String, ClaimError> {
    let mut rest = raw.trim();
    if let Some(idx) = rest.find("://") {
        rest = &rest[idx + 3..];
    }
    if let Some(idx) = rest.find(['/', '?', '#']) {
        rest = &rest[..idx];
    }
    if let Some(idx) = rest.rfind('@') {
        rest = &rest[idx + 1..];
    }
    if let Some(idx) = rest.rfind(':') {
        rest = &rest[..idx];
    }
    let mut host = rest.trim_end_matches('.').to_ascii_lowercase();
    if let Some(stripped) = host.strip_prefix("www.") {
        host = stripped.to_string();
    }
    let valid = !host.is_empty()
        && host
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '.' || !c.is_ascii());
    if valid {
        Ok(host)
    } else {
        Err(ClaimError::InvalidDomain(raw.to_string()))
    }
}

/// The unit of verification: a title plus optional source domain and
/// publish date.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawClaim", into = "RawClaim")]
pub struct NewsClaim {
    claim_id: String,
    title: String,
    domain_url: Option<String>,
    publish_date: Option<NaiveDate>,
}

impl NewsClaim {
    pub fn new(claim_id: impl Into<String>, title: impl Into<String>) -> Result<Self, ClaimError> {
        let title = title.into();
        if title.trim().is_empty() {
            return Err(ClaimError::EmptyTitle);
        }
        Ok(Self {
            claim_id: claim_id.into(),
            title,
            domain_url: None,
            publish_date: None,
        })
    }

    /// Sets the source hostname. Anything carrying a scheme or a path is
    /// rejected; use [`normalize_domain`] first for raw URLs.
    pub fn with_domain(mut self, domain: &str) -> Result<Self, ClaimError> {
        if domain.contains("://") || domain.contains('/') {
            return Err(ClaimError::InvalidDomain(domain.to_string()));
        }
        self.domain_url = Some(normalize_domain(domain)?);
        Ok(self)
    }

    pub fn with_date(mut self, date: NaiveDate) -> Self {
        self.publish_date = Some(date);
        self
    }

    pub fn claim_id(&self) -> &str {
        &self.claim_id
    }

    pub fn title(&self) -> &str {
        &self.title
    }

    pub fn domain_url(&self) -> Option<&str> {
        self.domain_url.as_deref()
    }

    pub fn publish_date(&self) -> Option<NaiveDate> {
        self.publish_date
    }

    /// Shorthand for [`render_descriptor`].
    pub fn descriptor(&self) -> String {
        render_descriptor(self)
    }
}

#[derive(Serialize, Deserialize)]
struct RawClaim {
    claim_id: String,
    title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    publish_date: Option<NaiveDate>,
}

impl TryFrom<RawClaim> for NewsClaim {
    type Error = ClaimError;

    fn try_from(raw: RawClaim) -> Result<Self, Self::Error> {
        let mut claim = NewsClaim::new(raw.claim_id, raw.title)?;
        if let Some(domain) = raw.domain_url {
            claim = claim.with_domain(&domain)?;
        }
        claim.publish_date = raw.publish_date;
        Ok(claim)
    }
}

impl From<NewsClaim> for RawClaim {
    fn from(c: NewsClaim) -> Self {
        RawClaim {
            claim_id: c.claim_id,
            title: c.title,
            domain_url: c.domain_url,
            publish_date: c.publish_date,
        }
    }
}

/// `Title: <title>, Domain URL: <url>, Publish Date: <MM/DD/YYYY>`, with
/// absent segments omitted. Titles are not escaped.
pub fn render_descriptor(claim: &NewsClaim) -> String {
    let mut out = format!("Title: {}", claim.title);
    if let Some(url) = &claim.domain_url {
        out.push_str(", Domain URL: ");
        out.push_str(url);
    }
    if let Some(date) = claim.publish_date {
        out.push_str(", Publish Date: ");
        out.push_str(&format_us_date(date));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordSource {
    PolitiFact,
    GossipCop,
    Snopes,
    #[default]
    Other,
}

impl core::str::FromStr for RecordSource {
    type Err = ClaimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "politifact" => Ok(Self::PolitiFact),
            "gossipcop" => Ok(Self::GossipCop),
            "snopes" => Ok(Self::Snopes),
            "other" | "" => Ok(Self::Other),
            _ => Err(ClaimError::UnknownLabel(s.to_string())),
        }
    }
}

/// A labelled claim from an evaluation dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub claim: NewsClaim,
    pub gold_label: VeracityLabel,
    #[serde(default)]
    pub source: RecordSource,
}
