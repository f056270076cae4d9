use std::path::PathBuf;

use crate::schema::Finding;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("report text is empty")]
    EmptyText,

    #[error("invalid label for {finding}: {reason}")]
    InvalidLabel { finding: Finding, reason: String },

    #[error("unknown finding name `{0}`")]
    UnknownFinding(String),

    #[error("unknown label value `{0}`")]
    UnknownLabel(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid lexicon: {0}")]
    Lexicon(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("report ids of predictions and references differ: {0}")]
    IdMismatch(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("bootstrap failed: {discarded} of {total} resamples had an undefined statistic")]
    Bootstrap { discarded: usize, total: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
