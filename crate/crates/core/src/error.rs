use thiserror::Error;

/// Errors produced by the estimators, trainers and file readers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("score {score} outside the domain of {loss}")]
    Domain { loss: &'static str, score: f64 },

    #[error("{count} observed labels exceed the enumeration cap of {cap}")]
    TooManyLabels { count: usize, cap: usize },

    #[error("{0} has no gradient")]
    UnsupportedGradient(&'static str),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("training diverged ({variant}, epoch {epoch}, batch {batch}): objective {value}")]
    Divergence {
        variant: String,
        epoch: usize,
        batch: usize,
        value: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
