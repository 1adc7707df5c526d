use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("infeasible strategy: {reason} (margin {margin:.3e})")]
    InfeasibleStrategy { reason: String, margin: f64 },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("operation requires a degraded channel (K_Z1 <= K_Z2); min eigenvalue of K_Z2 - K_Z1 is {margin:.3e}")]
    DegradednessRequired { margin: f64 },

    #[error("no convergence after {iterations} iterations (stationarity residual {residual:.3e})")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("enhanced channel invariant violated: {check} (margin {margin:.3e})")]
    EnhancementFailed { check: String, margin: f64 },

    #[error("quadrature did not converge (error estimate {estimate:.3e})")]
    Quadrature { estimate: f64 },

    #[error("no strategy satisfies the leakage budgets (best violation {violation:.3e})")]
    Infeasible { violation: f64 },

    #[error("sample covariance is singular: {0}")]
    DegenerateSample(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
