//! Disjoint resource allocation baseline: cloud cycles are split statically
//! in proportion to each task's cycle demand, and only the radio side is
//! optimized (the same outer loop with the shares frozen).

use anyhow::Result;
use mecsolve_core::{
    initial_allocation_fixed_f, sca_run, CoreError, NetworkScenario, ScaMethod, ScaOutcome,
    SurrogateConfig,
};

/// Static split `f_i = w_i · f_T / Σ w`.
pub fn dra_shares(s: &NetworkScenario) -> Vec<f64> {
    let total: f64 = (0..s.num_users()).map(|i| s.task(i).cpu_cycles).sum();
    (0..s.num_users())
        .map(|i| s.task(i).cpu_cycles * s.cloud_budget() / total)
        .collect()
}

/// Outcome of the baseline. `run` is `None` when no default covariance
/// probe meets every deadline at the frozen shares — the realization is
/// DRA-infeasible, which is reported, not fatal.
pub struct DraResult {
    pub shares: Vec<f64>,
    pub run: Option<ScaOutcome>,
}

pub fn dra_baseline(s: &NetworkScenario, base: &SurrogateConfig) -> Result<DraResult> {
    let shares = dra_shares(s);
    let z0 = match initial_allocation_fixed_f(s, &shares) {
        Ok(z0) => z0,
        Err(CoreError::Infeasible(_)) => return Ok(DraResult { shares, run: None }),
        Err(e) => return Err(e.into()),
    };
    let mut cfg = base.clone();
    cfg.freeze_compute = true;
    let out = sca_run(s, &z0, &cfg, ScaMethod::Centralized)?;
    Ok(DraResult { shares, run: Some(out) })
}
