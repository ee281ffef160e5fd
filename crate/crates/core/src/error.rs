use thiserror::Error;

/// Errors raised by the construction, quadrature and verification routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty or reversed interval ({a}, {b})")]
    EmptyInterval { a: String, b: String },

    #[error("breakpoints must be strictly increasing")]
    UnsortedBreakpoints,

    #[error("piece count mismatch: {breaks} breakpoints for {values} values")]
    ShapeMismatch { breaks: usize, values: usize },

    #[error("weight must be strictly positive (piece {piece})")]
    NonPositiveWeight { piece: usize },

    #[error("intervals {first} and {second} overlap")]
    Overlap { first: usize, second: usize },

    #[error("probe {0} lies inside the open set")]
    InteriorProbe(usize),

    #[error("sawtooth data inconsistent: {0}")]
    SawtoothMismatch(String),

    #[error("construction exceeds the piece limit ({pieces} > {limit})")]
    TooManyPieces { pieces: usize, limit: usize },

    #[error("audit failed: {0}")]
    AuditFailed(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
