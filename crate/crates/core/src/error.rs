use thiserror::Error;

/// Errors produced by the engine.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("unknown video id: {0}")]
    UnknownVideo(String),

    #[error("generator does not support {0}")]
    CapabilityMissing(String),

    #[error("budget exhausted: need {needed} unlabeled videos, have {available}")]
    BudgetExhausted { needed: usize, available: usize },

    #[error("state file mismatch: {0}")]
    StateMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub fn data(msg: impl Into<String>) -> Self {
        CoreError::InvalidData(msg.into())
    }
}
