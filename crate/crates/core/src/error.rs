use thiserror::Error;

use crate::train::TrainTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid score: {0}")]
    InvalidScore(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate dataset: {0}")]
    Degenerate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize, trace: TrainTrace },
}

impl Error {
    /// True for errors caused by the data itself rather than by arguments.
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::Degenerate(_) | Error::InsufficientData(_))
    }
}
