//! Error type shared across the crate.

use crate::trainer::TrainTrace;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("example has no label")]
    MissingLabel,

    #[error("inner maximization diverged to a non-finite iterate")]
    DivergedAttack,

    #[error("training produced a non-finite parameter vector at iteration {}", trace.risk_history.len())]
    DivergedTraining { trace: Box<TrainTrace> },

    #[error("instance too large: limit {limit}, got {got}")]
    InstanceTooLarge { limit: usize, got: usize },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
