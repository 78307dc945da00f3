use thiserror::Error;

use crate::reasoner::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state corruption: {0}")]
    StateCorruption(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("planner output could not be parsed: {0}")]
    PlannerParse(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("replay buffer not ready: {len} transitions, batch needs {batch}")]
    NotReady { len: usize, batch: usize },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("template error: {0}")]
    Template(String),

    #[error("toolkit unavailable: {0}")]
    ToolkitUnavailable(String),

    #[error("toolkit protocol error: {0}")]
    ToolkitProtocol(String),

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("dataset row {id}: {message}")]
    Dataset { id: String, message: String },

    #[error("checkpoint incompatible: {0}")]
    CheckpointIncompatible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
