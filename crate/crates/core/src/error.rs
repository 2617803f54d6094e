use std::path::PathBuf;

use thiserror::Error;

use crate::qoi::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    /// The expression was evaluated outside of its domain, e.g. the square
    /// root of a negative number or a division by zero.
    #[error("domain error: {0}")]
    Domain(String),

    /// A QoI evaluation failed at a specific data point during retrieval.
    #[error("QoI `{qoi}` is undefined at point {index} (values {values:?}): {reason}")]
    PointDomain {
        qoi: String,
        index: usize,
        values: Vec<f64>,
        reason: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("quantizer needs {bits} bits per code, at most 63 are supported")]
    QuantizerOverflow { bits: u32 },

    #[error("corrupt payload: {0}")]
    CorruptPayload(String),

    #[error("corrupt store at {path}: {reason}")]
    CorruptStore { path: PathBuf, reason: String },

    #[error("{0} is not a segment store (no manifest.json)")]
    NotAStore(PathBuf),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::CorruptStore {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
