//! IO side of the `verity` claim checker: HTTP providers, the on-disk domain
//! store, dataset loading, batch evaluation, configuration and the CLI.

use std::path::{Path, PathBuf};

pub mod cli;
pub mod config;
pub mod dataset;
pub mod harness;
pub mod offline;
pub mod providers;
pub mod store;

pub use verity_core as core;

/// Failure reading one of the input files.
#[derive(Debug, thiserror::Error)]
pub enum FileError {
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

impl FileError {
    pub fn format(path: &Path, line: usize, reason: impl Into<String>) -> Self {
        FileError::Format {
            path: path.to_path_buf(),
            line,
            reason: reason.into(),
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String, FileError> {
    std::fs::read_to_string(path).map_err(|source| FileError::Io {
        path: path.to_path_buf(),
        source,
    })
}
