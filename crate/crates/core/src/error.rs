//! Error types shared across the crate.

use thiserror::Error;

/// Which runtime tracking constraint was violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// |X| reached 1 - eps1: the inversion would leave the Hermitian regime.
    TrackingArgument,
    /// The bond magnitude R (or the commutator magnitude R_O) fell to eps2:
    /// the field no longer couples to the tracked observable.
    BondMagnitude,
}

impl std::fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConstraintKind::TrackingArgument => write!(f, "tracking argument |X|"),
            ConstraintKind::BondMagnitude => write!(f, "bond magnitude R"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sector dimension overflow for L={sites}, N_up={n_up}, N_down={n_down}")]
    DimensionOverflow {
        sites: usize,
        n_up: usize,
        n_down: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "eigensolver did not converge: residual {residual:.3e} after {restarts} restarts \
         (tolerance {tol:.3e})"
    )]
    SolverFailure {
        residual: f64,
        restarts: usize,
        tol: f64,
    },

    #[error("integrator failure at t={time:.6}: {reason}")]
    IntegratorFailure { time: f64, reason: String },

    #[error("constraint violation at t={time:.6}: {kind} = {value:.6e}")]
    ConstraintViolation {
        time: f64,
        kind: ConstraintKind,
        value: f64,
    },

    #[error("consistency check failed: {0}")]
    Consistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;
