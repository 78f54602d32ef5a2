use thiserror::Error;

/// Errors shared by all modules.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: bad dimensions, invalid permutations, out-of-range
    /// spins, boundary sites that are not boundary sites, and the like.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A capacity guard would be exceeded; the message names the guard.
    #[error("capacity guard violated: {0}")]
    Capacity(String),

    /// The operation is defined only for a restricted model class.
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    /// Every configuration of a measure has weight zero.
    #[error("degenerate measure: {0}")]
    DegenerateMeasure(String),

    /// A numeric cross-check failed (residual above tolerance, eigensolver
    /// breakdown, non-finite value).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A run artifact could not be written or read.
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),

    /// An experiment config did not match the strict schema.
    #[error("config rejected: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
