use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid value for parameter `{param}`: {reason}")]
    Validation { param: String, reason: String },
    #[error("invalid search space: {0}")]
    Space(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("unsupported Sobol dimension {0} (max {max})", max = crate::turbo::sobol::MAX_DIM)]
    UnsupportedDimension(usize),
    #[error("all objective values are identical; cannot split into two clusters")]
    DegenerateLabels,
    #[error("classifier needs both labels present")]
    InvalidLabels,
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("no observations yet")]
    EmptyHistory,
    #[error("undefined score for objective `{0}`: no traces, or the random-search baseline already reaches the optimum")]
    UndefinedScore(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
