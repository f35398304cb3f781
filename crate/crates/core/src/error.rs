//! Crate-wide error type.
//!
//! Solver non-convergence variants carry the best iterate found so that
//! callers can inspect or salvage a partial result instead of losing it.

use crate::sca::SubproblemSolution;

/// Errors produced by model construction and the solver stack.
#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix not positive definite (min eigenvalue {min_eig:.3e})")]
    NotPositiveDefinite { min_eig: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The convex inner solver ran out of iterations before reaching its
    /// residual target. `best` is the last (feasible) iterate.
    #[error("inner solver stalled at residual {residual:.3e} after {iters} iterations")]
    InnerNonConvergence {
        residual: f64,
        iters: usize,
        best: Box<SubproblemSolution>,
    },

    /// A dual (multiplier-ascent) solver ran out of iterations. `best` is
    /// the best primal-dual pair reached.
    #[error("dual solver stalled at residual {residual:.3e} after {iters} iterations")]
    DualNonConvergence {
        residual: f64,
        iters: usize,
        best: Box<SubproblemSolution>,
    },

    /// Restoring feasibility after a dual solve would perturb the objective
    /// by more than the allowed budget (1%).
    #[error("feasibility polish would perturb objective by {perturbation:.3e} (limit {limit:.3e})")]
    PolishFailure { perturbation: f64, limit: f64 },

    /// An internal invariant failed; indicates a numerical breakdown rather
    /// than bad user input.
    #[error("internal inconsistency: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
