//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by graph construction, training, aggregation and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A structural problem with a graph: asymmetric adjacency, index out of
    /// range, mask/label disagreement, and similar.
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    /// A parameter outside its documented domain (negative rate, fraction
    /// outside (0, 1], zero-degree node without self-loops, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Matrix or vector shapes that do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Partitioning failures (more clients than communities, empty client, ...).
    #[error("partition error: {0}")]
    Partition(String),

    /// Underlying filesystem failures.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// A malformed input file; reports the offending line.
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// A malformed or inconsistent run configuration.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
