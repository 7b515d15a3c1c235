//! Domain-credibility history persisted as JSON Lines.
//!
//! The whole file is rewritten on every update through a temp file in the
//! same directory followed by a rename, so a reader that opens the path at
//! any moment sees either the previous or the next complete snapshot.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::NaiveDate;
use verity_core::evidence::domain_key;
use verity_core::{DomainRecord, DomainStore, EvidenceError, VeracityLabel};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {reason}")]
    Format {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl From<StoreError> for EvidenceError {
    fn from(e: StoreError) -> Self {
        EvidenceError::Store(e.to_string())
    }
}

#[derive(Debug)]
pub struct FileDomainStore {
    path: PathBuf,
    records: RwLock<BTreeMap<String, DomainRecord>>,
    writer: Mutex<()>,
}

impl FileDomainStore {
    /// Opens the store at `path`. A missing file is an empty store; the file
    /// is created on the first write.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let records = match fs::read_to_string(&path) {
            Ok(text) => parse_records(&path, &text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        Ok(Self {
            path,
            records: RwLock::new(records),
            writer: Mutex::new(()),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn snapshot(&self) -> Vec<DomainRecord> {
        self.records.read().unwrap().values().cloned().collect()
    }

    fn persist(&self, records: &BTreeMap<String, DomainRecord>) -> Result<(), StoreError> {
        let io = |source| StoreError::Io {
            path: self.path.clone(),
            source,
        };
        let dir = match self.path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&dir).map_err(io)?;
        let tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
        {
            let mut out = BufWriter::new(tmp.as_file());
            for rec in records.values() {
                serde_json::to_writer(&mut out, rec).map_err(|e| io(e.into()))?;
                out.write_all(b"\n").map_err(io)?;
            }
            out.flush().map_err(io)?;
        }
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(&self.path).map_err(|e| io(e.error))?;
        Ok(())
    }
}

fn parse_records(path: &Path, text: &str) -> Result<BTreeMap<String, DomainRecord>, StoreError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let format = |reason: String| StoreError::Format {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let rec: DomainRecord = serde_json::from_str(line).map_err(|e| format(e.to_string()))?;
        let key = domain_key(&rec.domain).map_err(|e| format(e.to_string()))?;
        if map.insert(key.clone(), rec).is_some() {
            return Err(format(format!("duplicate domain {key}")));
        }
    }
    Ok(map)
}

impl DomainStore for FileDomainStore {
    fn lookup(&self, domain: &str) -> Result<Option<DomainRecord>, EvidenceError> {
        let key = domain_key(domain)?;
        Ok(self.records.read().unwrap().get(&key).cloned())
    }

    fn record(
        &self,
        domain: &str,
        label: VeracityLabel,
        when: NaiveDate,
        overview: Option<&str>,
    ) -> Result<DomainRecord, EvidenceError> {
        let key = domain_key(domain)?;
        let _writer = self.writer.lock().unwrap();
        let mut next = self.records.read().unwrap().clone();
        let rec = next
            .entry(key.clone())
            .or_insert_with(|| DomainRecord::new(key, when));
        rec.apply(label, when, overview);
        let updated = rec.clone();
        // Disk first: if the write fails, memory still matches the file.
        self.persist(&next)?;
        *self.records.write().unwrap() = next;
        Ok(updated)
    }
}
