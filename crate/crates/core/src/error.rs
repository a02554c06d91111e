use std::path::PathBuf;

use thiserror::Error;

use crate::types::GoalId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid observation: {0}")]
    InvalidObservation(String),

    #[error("no candidates")]
    NoCandidates,

    #[error("stale goal id {0}")]
    StaleGoalId(GoalId),

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("non-finite loss in {component}: {detail}")]
    NonFiniteLoss { component: &'static str, detail: String },

    #[error("replay exhausted at query {0}")]
    ReplayExhausted(u64),

    #[error("replay mismatch: {0}")]
    ReplayMismatch(String),

    #[error("prompt template error: {0}")]
    PromptTemplate(String),

    #[error("comparator error: {0}")]
    Comparator(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown key '{key}' at line {line}")]
    UnknownConfigKey { key: String, line: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
