use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::ClassId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("truncated data: {0}")]
    Truncated(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("image has no foreground pixels above threshold {threshold}")]
    EmptyForeground { threshold: u32 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: expected dimension {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("class {class} has no training rows")]
    ClassData { class: ClassId },

    #[error("class {class} has no map in the model")]
    ClassCoverage { class: ClassId },

    #[error("model error: {0}")]
    Model(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("feature extraction failed for {image}: {reason}")]
    Extraction { image: String, reason: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_fold(self, fold: usize) -> Self {
        Error::Fold {
            fold,
            source: Box::new(self),
        }
    }

    /// True for invalid configuration, as opposed to bad data.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Fold { source, .. } => source.is_usage(),
            _ => false,
        }
    }

    pub fn is_integrity(&self) -> bool {
        match self {
            Error::Integrity(_) => true,
            Error::Fold { source, .. } => source.is_integrity(),
            _ => false,
        }
    }
}
