use thiserror::Error;

use crate::model::ValidationReport;

/// Errors raised by the core library. State indices carried in messages are
/// 1-based, matching every external format.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state space: {0}")]
    InvalidSpace(String),

    #[error("invalid transition matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid transition tensor: {0}")]
    InvalidTensor(String),

    #[error("invalid chain initialization: {0}")]
    InvalidInit(String),

    #[error("state index {index} out of range 1..={m} (subject {subject})")]
    StateOutOfRange { subject: String, index: usize, m: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset failed strict validation with {} violation(s)", .0.violations.len())]
    Validation(ValidationReport),

    #[error("pair ({h}, {j}) is not supported by the tensor")]
    UnsupportedPair { h: usize, j: usize },

    #[error("pair ({h}, {j}) has no at-risk observations")]
    NoSupport { h: usize, j: usize },

    #[error("step count must be at least {min}, got {got}")]
    InvalidSteps { min: usize, got: usize },

    #[error("day must be at least 1, got {0}")]
    InvalidDay(usize),

    #[error("transition {l} -> {m} is not a move permitted by the state space")]
    NotAdjacent { l: usize, m: usize },

    #[error("conditioning state {0} is never occupied at any grid point")]
    VacuousConditioning(usize),

    #[error("every grid point of the process is degenerate (zero variance)")]
    AllDegenerate,

    #[error("invalid test grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
