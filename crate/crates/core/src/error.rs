use thiserror::Error;

/// Failure modes shared by every operation in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid post-composition: {0}")]
    InvalidPostComposition(String),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("region is empty")]
    Infeasible,
    #[error("linear objective is unbounded below on the region")]
    Unbounded,
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("data error: {0}")]
    Data(String),
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
