//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChcError {
    /// A field was used with a geometry it does not belong to.
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    /// Potential evaluated outside its open domain (or inside the endpoint guard).
    #[error("potential domain violation: r = {value} outside ({lo}, {hi})")]
    DomainViolation { value: f64, lo: f64, hi: f64 },

    /// Input to the inverse Neumann operator has a nonzero mean.
    #[error("field is not zero-mean: mean = {mean:.3e}")]
    NotZeroMean { mean: f64 },

    /// An iterative linear solve exceeded its iteration cap.
    #[error("{solver} did not converge: residual {residual:.3e} after {iterations} iterations")]
    SolverDiverged {
        solver: &'static str,
        residual: f64,
        iterations: usize,
    },

    /// Newton failed to reach the residual tolerance at a time step.
    #[error("Newton diverged at step {step}: residual {residual:.3e} after {iterations} iterations")]
    NewtonDiverged {
        step: usize,
        residual: f64,
        iterations: usize,
    },

    /// The step Jacobian could not be factorized.
    #[error("singular Jacobian at step {step}")]
    SingularJacobian { step: usize },

    /// Inconsistent configuration (time grids, sizes, parameter ranges).
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    /// Trajectories or data series defined on different grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A finite-difference probe left the admissible region.
    #[error("infeasible perturbation: {0}")]
    InfeasiblePerturbation(String),
}

pub type Result<T> = std::result::Result<T, ChcError>;
