use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("backward called twice without a new forward pass")]
    BackwardTwice,

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite value produced by {0}")]
    NonFiniteValue(&'static str),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("parameter snapshot is stale: rollout taken at version {recorded}, model is at {current}")]
    StaleSnapshot { recorded: u64, current: u64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {reason}")]
    Data { path: PathBuf, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error("missing requirement: {0}")]
    Missing(String),

    #[error("schema mismatch in {path}: offending columns {columns:?}")]
    Schema { path: PathBuf, columns: Vec<String> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
