//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("stationary density null space is not one-dimensional: {0}")]
    DegenerateNullSpace(String),

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("field file: {0}")]
    FieldFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
