use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Quantity is mathematically undefined for the given input (zero
    /// denominators, degenerate ratios).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("enumeration budget exceeded: {patterns_log2} sign bits > {budget_log2}")]
    Budget { patterns_log2: usize, budget_log2: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}
