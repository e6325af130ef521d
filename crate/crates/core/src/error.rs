//! Error types shared across the engine.

use thiserror::Error;

/// Errors produced by the engine.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A migration-count row sums to zero, so no transition rates can be estimated.
    #[error("cohort row {0} has zero total count")]
    EmptyCohortRow(usize),

    /// The default row of a count matrix has mass outside the default column
    /// and forcing absorption was not requested.
    #[error("default row of counts has off-default mass and absorption forcing is disabled")]
    NonAbsorbingDefault,

    /// An overlay exponent |beta * m| exceeded the configured cap. This signals
    /// ill-scaled inputs rather than silently saturating the exponential.
    #[error("overlay exponent {value} exceeds cap {cap}")]
    OverflowGuard { value: f64, cap: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    /// The innovation covariance is numerically singular and no
    /// exact-observation rule applies.
    #[error("innovation covariance is numerically singular")]
    SingularInnovation,

    /// The Riccati fixed-point iteration did not converge; usually a
    /// non-detectable configuration.
    #[error("Riccati iteration did not converge within {0} iterations")]
    NoConvergence(usize),

    /// Accumulated floating-point drift on a propagated distribution exceeded
    /// the diagnostic threshold.
    #[error("simplex drift {drift:e} at step {step} exceeds 1e-9")]
    ExcessiveDrift { step: usize, drift: f64 },

    #[error("validation: {0}")]
    Validation(String),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
