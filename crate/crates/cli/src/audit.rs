//! Independent post-hoc feasibility audit. Every allocation behind an
//! emitted converged row is re-checked from scratch — latency constraints,
//! per-user power, cloud budget — through the plain model evaluators, not
//! the solver's own bookkeeping.

use anyhow::{bail, Result};
use mecsolve_core::{AllocationState, NetworkScenario};

/// Violation levels a converged row must stay under.
pub const AUDIT_LATENCY_TOL: f64 = 1e-6;
pub const AUDIT_POWER_REL_TOL: f64 = 1e-9;
pub const AUDIT_BUDGET_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct AuditReport {
    /// Largest latency-constraint value over users (g-form; ≤ 0 is feasible).
    pub max_latency_g: f64,
    /// Largest relative power overshoot `tr(Q)/P − 1` over users.
    pub power_excess: f64,
    /// Relative cloud overshoot `Σf/f_T − 1`.
    pub budget_excess: f64,
    pub ok: bool,
}

pub fn audit_state(s: &NetworkScenario, state: &AllocationState) -> AuditReport {
    let n = s.num_users();
    let max_latency_g = (0..n)
        .map(|i| s.latency_constraint_g(state, i))
        .fold(f64::NEG_INFINITY, f64::max);
    let power_excess = (0..n)
        .map(|i| state.covariances[i].trace() / s.power_budget(i) - 1.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let budget_excess = state.compute_rates.iter().sum::<f64>() / s.cloud_budget() - 1.0;
    let ok = max_latency_g <= AUDIT_LATENCY_TOL
        && power_excess <= AUDIT_POWER_REL_TOL
        && budget_excess <= AUDIT_BUDGET_REL_TOL;
    AuditReport { max_latency_g, power_excess, budget_excess, ok }
}

/// Audits an allocation that is about to be emitted as a converged row;
/// a failure here is a solver bug surfacing, not an input problem.
pub fn require_feasible(
    s: &NetworkScenario,
    state: &AllocationState,
    context: &str,
) -> Result<AuditReport> {
    let report = audit_state(s, state);
    if !report.ok {
        bail!(
            "audit failed for {context}: latency g {:.3e}, power excess {:.3e}, budget excess {:.3e}",
            report.max_latency_g,
            report.power_excess,
            report.budget_excess
        );
    }
    Ok(report)
}
