use thiserror::Error;

/// Errors produced by the tracking engine and its I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("diverged filter: {0}")]
    DivergedFilter(String),

    #[error("singular innovation covariance (condition number {condition:.3e})")]
    SingularInnovation { condition: f64 },

    #[error("pipeline: {0}")]
    Pipeline(String),

    #[error("evaluation: {0}")]
    Eval(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
