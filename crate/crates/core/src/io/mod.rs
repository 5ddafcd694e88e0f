//! File formats: feature files, checkpoints, run configs and phrase lists.

pub mod checkpoint;
pub mod config;
pub mod features;
pub mod phrases;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::conditioning::ConditioningError;
use crate::duration::DurationError;
use crate::numerics::NumericsError;
use crate::score::ScoreError;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use config::{CorpusSource, DurationMode, RunConfig};
pub use features::FeatureFile;
pub use phrases::{f0_to_text, load_phrase_list, parse_f0_text, read_f0, write_corpus, PhraseRecord};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("{0}")]
    Format(String),
    #[error("checksum mismatch")]
    Checksum,
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("config line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("phrase list {0} is empty")]
    EmptyList(PathBuf),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Duration(#[from] DurationError),
    #[error(transparent)]
    Conditioning(#[from] ConditioningError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

impl IoError {
    /// Attaches a file name to format-level errors.
    pub fn at(self, path: &Path) -> Self {
        match self {
            IoError::Format(message) => IoError::File {
                path: path.to_path_buf(),
                message,
            },
            IoError::Checksum => IoError::File {
                path: path.to_path_buf(),
                message: "checksum mismatch".into(),
            },
            IoError::Config { line, message } => IoError::File {
                path: path.to_path_buf(),
                message: format!("line {line}: {message}"),
            },
            IoError::UnknownKey { line, key } => IoError::File {
                path: path.to_path_buf(),
                message: format!("line {line}: unknown key {key:?}"),
            },
            other => other,
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|e| IoError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    std::fs::write(path, bytes).map_err(|e| IoError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
