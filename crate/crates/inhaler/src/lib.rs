//! File formats, dataset trees, checkpoints, run directories and reports
//! for the `inhaler-core` pipeline.

pub mod checkpoint;
pub mod dataset;
pub mod experiment;
pub mod formats;
pub mod report;
pub mod wav;

use std::path::PathBuf;

pub use inhaler_core as core;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("cannot read audio {path}: {reason}")]
    UnreadableAudio { path: PathBuf, reason: String },
    #[error("recording {0} has no annotation file")]
    MissingAnnotation(PathBuf),
    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("no recordings found under {0}")]
    EmptyDataset(PathBuf),
    #[error("cannot write {path}: {reason}")]
    Write { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Fs { path: PathBuf, source: std::io::Error },
    #[error("invalid checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error("{path}: {reason}")]
    Audio { path: PathBuf, reason: String },
    #[error(transparent)]
    Corpus(#[from] inhaler_core::corpus::CorpusError),
}

impl IoError {
    pub(crate) fn fs(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Fs { path, source }
    }
}

/// Writes `value` as pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &std::path::Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| IoError::Write { path: path.to_path_buf(), reason: e.to_string() })?;
    text.push('\n');
    std::fs::write(path, text).map_err(IoError::fs(path))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T, IoError> {
    let text = std::fs::read_to_string(path).map_err(IoError::fs(path))?;
    serde_json::from_str(&text).map_err(|e| IoError::Parse { path: path.to_path_buf(), line: e.line(), reason: e.to_string() })
}
