use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box [{x1}, {y1}, {x2}, {y2}]: {reason}")]
    InvalidBox {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        reason: &'static str,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("class id {class_id} out of range (class count {num_classes})")]
    UnknownClass { class_id: usize, num_classes: usize },

    #[error("unknown class name {0:?}")]
    UnknownClassName(String),

    #[error("detector id {0} is not present in the pool")]
    UnknownDetector(usize),

    #[error("fold mismatch: {0}")]
    FoldMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("instance too large for the brute-force oracle: {detections} detections, {ground_truth} ground truths")]
    OracleBound {
        detections: usize,
        ground_truth: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}, column {column}: {message}")]
    Json {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user-supplied settings rather than bad data.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidConfig(_))
    }
}
