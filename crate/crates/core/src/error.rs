//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A simplex whose measure is below the scale-aware degeneracy threshold.
    #[error("degenerate simplex: measure {measure:e} below threshold {threshold:e}")]
    DegenerateGeometry { measure: f64, threshold: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A point-location query outside the closed unit cube.
    #[error("point outside the unit cube: coordinate {axis} is {value}")]
    OutsideDomain { axis: usize, value: f64 },

    /// Resource guard tripped: the requested discretization is too large.
    #[error("dof budget exceeded{context}: {requested} vertices requested, budget is {budget}")]
    BudgetExceeded {
        requested: usize,
        budget: usize,
        context: String,
    },

    /// An iterative solver failed to converge or detected an inconsistency.
    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("eigensolver failure: {0}")]
    EigenFailure(String),

    /// A structural invariant that should hold by construction was violated.
    #[error("internal invariant violated: {0}")]
    InvariantViolation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
