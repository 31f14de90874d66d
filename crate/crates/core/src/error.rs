use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    Invalid(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("unknown frame `{0}`")]
    UnknownFrame(String),

    #[error("{name} = {value} is outside [{min}, {max}]")]
    OutOfRange {
        name: String,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("selector model has no training pairs")]
    EmptyModel,

    #[error("found only {found} of {needed} feasible samples after {attempts} attempts")]
    TooFewFeasible {
        found: usize,
        needed: usize,
        attempts: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed capability map: {0}")]
    MapFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;
