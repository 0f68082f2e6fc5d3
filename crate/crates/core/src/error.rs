use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("feature matrix of task {task} is rank deficient: rank {rank} < dim {dim}")]
    RankDeficient { task: usize, rank: usize, dim: usize },

    #[error("problem too large for dense oracle: {pairs} state-action pairs exceeds {limit}")]
    TooLarge { pairs: usize, limit: usize },

    #[error("baseline metric {index} is zero; relative drop undefined")]
    ZeroBaseline { index: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code for the command-line front end: 2 for bad input,
    /// 3 for I/O, 4 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse(_) | Error::DimensionMismatch { .. } | Error::TooLarge { .. } => 2,
            Error::Io(_) => 3,
            Error::Numeric(_) | Error::RankDeficient { .. } | Error::ZeroBaseline { .. } => 4,
        }
    }
}
