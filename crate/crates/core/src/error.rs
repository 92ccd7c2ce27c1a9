//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by model construction, sampling, and filtering.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("Hurst exponent must lie strictly inside (0, 1), got {0}")]
    InvalidHurst(f64),

    #[error("innovation variance must be finite and non-negative, got {0}")]
    InvalidVariance(f64),

    #[error("gamma parameter {name} must be finite and positive, got {value}")]
    InvalidGammaParam { name: &'static str, value: f64 },

    #[error("{what} must be finite")]
    NonFiniteInput { what: &'static str },

    #[error("horizon must be at least 1")]
    EmptyHorizon,

    #[error("matrix is not positive definite (factorization failed at pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("matrix is not symmetric at entry ({row}, {col})")]
    Asymmetric { row: usize, col: usize },

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("observations must be non-negative, got {value}")]
    NegativeObservation { value: f64 },

    #[error("non-finite Monte Carlo sample at draw {index}: {detail}")]
    NonFiniteSample { index: usize, detail: String },

    #[error("every particle weight underflowed to zero at step {step}")]
    WeightUnderflow { step: usize },

    #[error("particle filter needs at least 2 particles, got {n}")]
    TooFewParticles { n: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("malformed data at line {line}: {message}")]
    DataFormat { line: usize, message: String },
}
