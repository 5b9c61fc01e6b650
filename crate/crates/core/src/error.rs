use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("unknown format version {found:?} (expected {expected:?})")]
    UnknownFormatVersion { expected: String, found: String },

    #[error("trial {subject}/{clip}: {signal} payload has {actual} bytes, expected {expected}")]
    LengthMismatch {
        subject: String,
        clip: u32,
        signal: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("trial {subject}/{clip}: {signal} payload checksum mismatch")]
    Checksum {
        subject: String,
        clip: u32,
        signal: &'static str,
    },

    #[error("trial {subject}/{clip}: {field} score {value} outside 1..5")]
    ScoreOutOfRange {
        subject: String,
        clip: u32,
        field: &'static str,
        value: i64,
    },

    #[error("score {0} outside 1..5")]
    InvalidScore(i64),

    #[error("invalid channel layout: {0}")]
    InvalidLayout(String),

    #[error("unknown electrode {0:?}")]
    UnknownElectrode(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("signal too short: {0}")]
    TooShort(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("need at least {needed} trials, found {found}")]
    TooFewTrials { needed: usize, found: usize },

    #[error("checkpoint was written for config {found}, expected {expected}")]
    ConfigMismatch { expected: String, found: String },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("{0}")]
    Metric(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
