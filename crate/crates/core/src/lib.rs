//! Joint radio/compute resource optimization for multicell MIMO offloading.
//!
//! Mobile users offload computation through MIMO uplinks to a shared cloud.
//! Each user must finish within a latency budget; the solver picks transmit
//! covariance matrices and cloud CPU-cycle shares that minimize total
//! transmit energy subject to those deadlines, per-user power budgets, and
//! the shared cloud capacity.
//!
//! Module map:
//! - [`linalg`] — Hermitian eigendecompositions and cone projections,
//! - [`model`] — scenario data, rates, latencies, energy, feasibility,
//! - [`single_user`] — closed-form solution for one user on one link,
//! - [`surrogate`] — convexified per-iteration objective and constraints,
//! - [`sca`] — the centralized successive-convex-approximation driver,
//! - [`distributed`] — dual-decomposition variants with per-cell updates.

pub mod distributed;
pub mod error;
pub mod linalg;
pub mod model;
pub mod sca;
pub mod single_user;
mod spg;
pub mod surrogate;

pub use distributed::{
    analytic_lipschitz_bound, closed_form_slack_update, dual_decomposed_solve, dual_slack_solve,
    newton_multiplier_step, per_cell_f_minimizer, slack_reformulate, DualTrace, DualTraceRecord,
    DualWarmStart, LipschitzProvenance, LipschitzTable, MultiplierUpdate, SeparableModel,
    SlackStep, SlackWarmStart,
};
pub use error::{CoreError, Result};
pub use linalg::{CMat, EigenDecomposition, HermitianMatrix, PsdMatrix};
pub use model::{AllocationState, FeasibilityReport, NetworkScenario, UserTask};
pub use sca::{
    initial_allocation, initial_allocation_fixed_f, max_true_constraint, sca_run,
    solve_subproblem, stationarity_residual, ConstraintModel, IterRecord, ScaMethod, ScaOutcome,
    SolveTrace, SubproblemSolution, CONSTRAINT_FEASIBILITY_TOL,
};
pub use single_user::{
    solve_single_user, waterfilling_covariance, SingleUserOutcome, SingleUserProblem,
    SingleUserSolution,
};
pub use surrogate::{energy_conj_gradient, Anchor, SurrogateConfig};
