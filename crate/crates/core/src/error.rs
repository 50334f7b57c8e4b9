use thiserror::Error;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("pump strength {eps} is at or above the parametric threshold (must be < 1)")]
    AboveThreshold { eps: f64 },

    #[error("steady state is not unique: relative singular-value gap {gap:.3e}")]
    DegenerateSteadyState { gap: f64 },

    #[error("integration unstable: trace drift {drift:.3e} after {steps} steps; increase the step count")]
    StepSize { drift: f64, steps: usize },

    #[error("Fock truncation too small: {0}")]
    Truncation(String),

    #[error("unphysical covariance matrix: {0}")]
    UnphysicalCovariance(String),

    #[error("fit did not converge (residual {residual:.3e}): {reason}")]
    FitFailure { residual: f64, reason: String },

    #[error("frame rotation undefined: |<XX>| or |<YY>| below {threshold:e}")]
    UndefinedFrame { threshold: f64 },

    #[error("optimizer stagnated at cost {cost:.3e} after {iterations} iterations")]
    NonConvergence {
        cost: f64,
        iterations: usize,
        /// Best iterate found, flattened row-major.
        best: Vec<f64>,
    },

    #[error("numerical integration did not converge: {0}")]
    Integration(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
