use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the tracking pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("non-finite coordinate: {0}")]
    InvalidCoordinate(String),
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error("sequence too short: {frames} frame(s), need at least 2")]
    SequenceTooShort { frames: usize },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing frame file {}", path.display())]
    MissingFrame { path: PathBuf },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
