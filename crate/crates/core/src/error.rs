//! Error type shared by every module.
//!
//! Checkers report verdicts as values, not errors; the variants here are for
//! operations that cannot produce a meaningful result at all. Diagnostics are
//! carried as `f64` regardless of the working scalar.

use thiserror::Error;

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A range computation was asked for on a numerically zero matrix.
    #[error("zero range: input matrix has no numerically nonzero columns")]
    ZeroRange,

    /// The unit/stable spectral split could not classify the spectrum.
    #[error("spectral split failed: {detail}; offending magnitudes {magnitudes:?}")]
    SplitFailed {
        detail: String,
        magnitudes: Vec<f64>,
    },

    /// Sylvester operator too close to singular to decouple blocks.
    #[error("sylvester operator near singular: smallest/largest singular value {smallest:e}/{largest:e}")]
    NearSingular { smallest: f64, largest: f64 },

    /// Invariant-form iteration hit its iteration budget.
    #[error("no convergence after {iterations} iterations (relative residual {residual:e}); input likely violates the unit-spectrum semisimplicity precondition")]
    NoConvergence { residual: f64, iterations: usize },

    /// A required model assumption failed; carries the checker's diagnostics.
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    /// `C U` lost row rank and output reduction was not requested.
    #[error("coupled output matrix is rank deficient (rank {rank} < {outputs} outputs); rerun with output reduction enabled")]
    RankDeficientCU { rank: usize, outputs: usize },

    /// Stationary-vector cross-validation between two methods disagreed.
    #[error("stationary vector did not converge: {0}")]
    ConvergenceFailure(String),

    /// A simulated state exceeded the overflow bound.
    #[error(
        "divergence detected at step {step}: state magnitude {magnitude:e} exceeds bound {bound:e}"
    )]
    DivergenceDetected {
        step: usize,
        magnitude: f64,
        bound: f64,
    },

    /// Enumeration request beyond the exhaustive-search bound.
    #[error("product family of length {len} exceeds enumeration bound {max}")]
    TooLarge { len: usize, max: usize },

    /// Incompatible matrix dimensions for the requested operation.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Input data contains NaN or infinite entries.
    #[error("non-finite entries in {0}")]
    NonFinite(String),

    /// A dense decomposition failed to converge or produced an unusable factor.
    #[error("numerical failure: {0}")]
    Numerical(String),
}
