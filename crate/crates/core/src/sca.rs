//! Outer successive-convex-approximation loop and the centralized inner
//! solver for its per-iteration subproblems.
//!
//! Each outer iteration anchors the convex models of [`crate::surrogate`] at
//! the current allocation, solves the resulting strongly convex subproblem,
//! and moves toward that solution with a diminishing relaxation step. Every
//! iterate stays feasible for the true problem: the constraint models upper
//! bound the true constraints and are tight at the anchor, so convex
//! combinations of the anchor and a model-feasible solution remain feasible.
//!
//! The inner solver is a shifted log-barrier continuation minimized by the
//! spectral projected-gradient engine: power caps, the PSD cone, the cloud
//! budget, and the cycle-share floors are handled by exact projections, the
//! coupled latency constraints by the barrier. Shifts allow anchors that sit
//! exactly on a constraint boundary; they are tightened to ~0 after a first
//! pull-inside phase so the final iterate is feasible to well below the
//! 1e-8 acceptance the outer loop requires.

use crate::distributed::{self, DualTrace, DualWarmStart, LipschitzTable, SlackWarmStart};
use crate::error::{CoreError, Result};
use crate::linalg::{self, c64, CMat, HermitianMatrix, PsdMatrix};
use crate::model::{AllocationState, NetworkScenario};
use crate::single_user::waterfilling_covariance;
use crate::spg::{self, BlockPoint, SpgOptions};
use crate::surrogate::{Anchor, SurrogateConfig};

use std::time::Instant;

/// Feasibility slack on the true latency constraints that every reported
/// iterate must meet.
pub const CONSTRAINT_FEASIBILITY_TOL: f64 = 1e-8;

/// Relative pole guard: cycle shares are kept at least `w/T̃ + 1e-9·f_T`.
const POLE_GUARD_REL: f64 = 1e-9;

/// How a per-iteration subproblem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaMethod {
    /// One barrier solve over all blocks jointly.
    Centralized,
    /// Dual decomposition of the separable quadratic constraint model,
    /// subgradient multiplier updates.
    DualLipschitz,
    /// Dual decomposition of the slack-reformulated model, subgradient
    /// multiplier updates.
    DualSlack,
    /// Slack reformulation with diagonal-Newton multiplier updates.
    DualSlackNewton,
}

impl ScaMethod {
    fn uses_slack(self) -> bool {
        matches!(self, ScaMethod::DualSlack | ScaMethod::DualSlackNewton)
    }
}

/// Convex constraint family evaluated by the inner solver: values of all
/// per-user latency models at a candidate, and the gradient blocks of an
/// arbitrary nonnegative combination of them.
pub trait ConstraintModel {
    fn constraint_values(&self, q: &[CMat], f: &[f64]) -> Result<Vec<f64>>;
    fn weighted_gradient(&self, q: &[CMat], f: &[f64], mult: &[f64])
        -> Result<(Vec<CMat>, Vec<f64>)>;
}

impl ConstraintModel for Anchor<'_> {
    fn constraint_values(&self, q: &[CMat], f: &[f64]) -> Result<Vec<f64>> {
        self.g_tilde(q, f)
    }

    fn weighted_gradient(
        &self,
        q: &[CMat],
        f: &[f64],
        mult: &[f64],
    ) -> Result<(Vec<CMat>, Vec<f64>)> {
        self.g_tilde_weighted_grad(q, f, mult)
    }
}

/// Solution of one convex subproblem, with the multiplier estimates the dual
/// methods use as warm starts.
#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub state: AllocationState,
    /// Latency-constraint multiplier estimates, one per user.
    pub multipliers: Vec<f64>,
    /// Cloud-budget multiplier estimate (for the normalized budget
    /// `(Σf − f_T)/f_T`).
    pub budget_multiplier: f64,
    /// Constraint-model values at the solution.
    pub constraint_values: Vec<f64>,
    /// Convex objective value at the solution.
    pub surrogate_value: f64,
    /// Scaled projected-gradient residual of the last inner stage.
    pub residual: f64,
    /// Inner iterations summed over all barrier stages (or dual iterations
    /// for the decomposed methods).
    pub iters: usize,
    /// Barrier stages run (1 for the dual methods).
    pub stages: usize,
}

/// One outer iteration of [`sca_run`].
#[derive(Debug, Clone)]
pub struct IterRecord {
    pub iter: usize,
    /// True total transmit energy after the relaxation step.
    pub energy: f64,
    /// Energy change versus the previous iterate (positive = decrease).
    pub energy_delta: f64,
    /// Largest true latency-constraint value over users.
    pub max_constraint: f64,
    /// Relaxation step γ used for the blend.
    pub step: f64,
    /// Inner (or dual) iterations spent on this subproblem.
    pub inner_iters: usize,
    /// Cumulative message count (dual methods; 0 for centralized).
    pub messages_cumulative: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SolveTrace {
    pub method: ScaMethod,
    pub records: Vec<IterRecord>,
}

/// Result of an outer run. `state` is the best feasible iterate by true
/// energy (the loop preserves feasibility, so normally the last one).
#[derive(Debug, Clone)]
pub struct ScaOutcome {
    pub state: AllocationState,
    pub energy: f64,
    pub outer_iters: usize,
    pub converged: bool,
    pub trace: SolveTrace,
    /// Scaled fixed-point residual at the returned state, if computed.
    pub stationarity: Option<f64>,
    pub dual_iters_total: usize,
    pub messages_total: usize,
    /// Per-outer-iteration dual traces (empty for the centralized method).
    pub dual_traces: Vec<DualTrace>,
}

/// Cycle-share floors `w/T̃ + 1e-9·f_T`; errors if even the floors exceed
/// the cloud budget.
pub(crate) fn share_floors(s: &NetworkScenario) -> Result<Vec<f64>> {
    let guard = POLE_GUARD_REL * s.cloud_budget();
    let lo: Vec<f64> = (0..s.num_users()).map(|i| s.task(i).compute_pole() + guard).collect();
    if lo.iter().sum::<f64>() > s.cloud_budget() {
        return Err(CoreError::Infeasible(
            "cycle-share poles alone exceed the cloud budget".into(),
        ));
    }
    Ok(lo)
}

/// Strictly interior warm-start shares: the minimum share meeting each
/// user's deadline at the anchor rates, plus the leftover budget spread in
/// proportion to cycle demands.
fn recentered_shares(anchor: &Anchor<'_>, lo: &[f64]) -> Result<Vec<f64>> {
    let s = anchor.scenario();
    let n = s.num_users();
    let mut f = Vec::with_capacity(n);
    for i in 0..n {
        let t = s.task(i);
        let slack = t.effective_deadline() - t.input_size_product / anchor.rates()[i];
        if slack <= 0.0 {
            return Err(CoreError::Infeasible(format!(
                "anchor rate of user {i} cannot meet its deadline at any cycle share"
            )));
        }
        f.push((t.cpu_cycles / slack).max(lo[i]));
    }
    let used: f64 = f.iter().sum();
    // A feasible anchor always covers its own demands (each f^eq is at most
    // the anchor share), so a negative remainder is floating-point noise.
    let spare = (s.cloud_budget() - used).max(0.0);
    let w_total: f64 = (0..n).map(|i| s.task(i).cpu_cycles).sum();
    for i in 0..n {
        f[i] += spare * s.task(i).cpu_cycles / w_total;
    }
    Ok(linalg::project_floor_capped(&f, lo, s.cloud_budget()))
}

/// Solves the convex subproblem anchored at `anchor` under the given
/// constraint model, by shifted log-barrier continuation over the simple
/// sets (PSD cones with power caps; floored, budgeted shares).
pub fn solve_subproblem(
    anchor: &Anchor<'_>,
    cfg: &SurrogateConfig,
    model: &dyn ConstraintModel,
) -> Result<SubproblemSolution> {
    let s = anchor.scenario();
    let n = s.num_users();
    let f_t = s.cloud_budget();
    let lo = share_floors(s)?;
    let lo_scaled: Vec<f64> = lo.iter().map(|x| x / f_t).collect();
    let freeze = cfg.freeze_compute;
    let frozen_f = anchor.state().compute_rates.clone();

    let q0: Vec<CMat> = anchor.state().covariances.iter().map(|m| m.as_matrix().clone()).collect();
    let f0_raw = if freeze { frozen_f.clone() } else { recentered_shares(anchor, &lo)? };
    let x0 = BlockPoint {
        q: q0.clone(),
        f: if freeze { vec![] } else { f0_raw.iter().map(|x| x / f_t).collect() },
    };

    let raw_f = |bp: &BlockPoint| -> Vec<f64> {
        if freeze {
            frozen_f.clone()
        } else {
            bp.f.iter().map(|x| x * f_t).collect()
        }
    };

    let g0 = model.constraint_values(&q0, &f0_raw)?;
    let scale: Vec<f64> = g0.iter().map(|g| 1.0 + g.abs()).collect();
    let e0 = anchor.energy_value(cfg, &q0, &f0_raw);
    if !e0.is_finite() {
        return Err(CoreError::Inconsistent("anchor energy model is not finite".into()));
    }

    // Barrier value/gradient over block points, parameterized by (t, shifts).
    let barrier_value = |bp: &BlockPoint, t: f64, shifts: &[f64]| -> f64 {
        let f = raw_f(bp);
        let Ok(g) = model.constraint_values(&bp.q, &f) else { return f64::INFINITY };
        let mut val = anchor.energy_value(cfg, &bp.q, &f);
        for i in 0..n {
            let slack = shifts[i] - g[i];
            if !(slack > 0.0) {
                return f64::INFINITY;
            }
            val -= slack.ln() / t;
        }
        val
    };
    let barrier_grad = |bp: &BlockPoint, t: f64, shifts: &[f64]| -> Result<BlockPoint> {
        let f = raw_f(bp);
        let g = model.constraint_values(&bp.q, &f)?;
        let mut mult = vec![0.0; n];
        for i in 0..n {
            let slack = shifts[i] - g[i];
            if !(slack > 0.0) {
                return Err(CoreError::Inconsistent(
                    "barrier gradient requested outside its domain".into(),
                ));
            }
            mult[i] = 1.0 / (t * slack);
        }
        let (eq, ef) = anchor.energy_gradient(cfg, &bp.q, &f)?;
        let (cq, cf_) = model.weighted_gradient(&bp.q, &f, &mult)?;
        let gq: Vec<CMat> = eq.into_iter().zip(cq).map(|(a, b)| a + b).collect();
        let gf: Vec<f64> = if freeze {
            vec![]
        } else {
            ef.iter().zip(&cf_).map(|(a, b)| (a + b) * f_t).collect()
        };
        Ok(BlockPoint { q: gq, f: gf })
    };
    let project = |mut bp: BlockPoint| -> BlockPoint {
        for (i, q) in bp.q.iter_mut().enumerate() {
            let h = HermitianMatrix::symmetrized(q);
            *q = linalg::project_power_psd(&h, s.power_budget(i))
                .expect("power budgets are validated positive")
                .as_matrix()
                .clone();
        }
        if !freeze {
            bp.f = linalg::project_floor_capped(&bp.f, &lo_scaled, 1.0);
        }
        bp
    };

    let spg_opts = SpgOptions {
        max_iters: cfg.inner_max_iters,
        grad_tol: cfg.inner_grad_tol,
        ..SpgOptions::default()
    };
    let run_stage = |x: BlockPoint, t: f64, shifts: &[f64]| -> Result<spg::SpgResult> {
        spg::minimize(
            x,
            |bp| barrier_value(bp, t, shifts),
            |bp| barrier_grad(bp, t, shifts),
            project,
            &spg_opts,
        )
    };

    let mut t = (n as f64) / (0.1 * (1.0 + e0.abs()));
    let mut shifts: Vec<f64> =
        g0.iter().zip(&scale).map(|(g, sc)| g.max(0.0) + 0.05 * sc).collect();
    let mut x = x0;
    let mut total_iters = 0usize;
    let mut stages = 0usize;
    let mut last = None;

    // Pull-inside phase: strengthen the barrier until every constraint is
    // strictly inside, or accept a boundary-pinned iterate (constraint sets
    // with empty interior, e.g. deadline exactly achievable).
    for attempt in 0..6 {
        let res = run_stage(x, t, &shifts)?;
        total_iters += res.iters;
        stages += 1;
        x = res.point.clone();
        let g = model.constraint_values(&x.q, &raw_f(&x))?;
        let inside = g.iter().zip(&scale).all(|(gi, sc)| *gi <= -1e-6 * sc);
        last = Some((res, g));
        if inside || attempt == 5 {
            break;
        }
        t /= 10.0;
    }
    let (_, g_now) = last.as_ref().expect("at least one stage ran");
    shifts = g_now
        .iter()
        .zip(&scale)
        .map(|(g, sc)| (g + 1e-10 * sc).max(1e-10 * sc))
        .collect();

    // Continuation: drive t up until the barrier suboptimality bound
    // (n/t plus the shift contribution) is negligible next to the outer
    // energy tolerance. Floor the target at 1% of `energy_tol`: pushing t
    // beyond that buys nothing the outer loop can see, while the barrier
    // curvature along active constraint normals grows like t and stalls the
    // gradient stages.
    let gap_rel = cfg.inner_gap_rel.max(1e-2 * cfg.energy_tol);
    let mut final_res;
    let mut final_g;
    loop {
        let res = run_stage(x, t, &shifts)?;
        total_iters += res.iters;
        stages += 1;
        x = res.point.clone();
        let g = model.constraint_values(&x.q, &raw_f(&x))?;
        let gap: f64 = (n as f64) / t
            + g.iter()
                .zip(&shifts)
                .map(|(gi, si)| si / (t * (si - gi).max(1e-300)))
                .sum::<f64>();
        let e_now = anchor.energy_value(cfg, &x.q, &raw_f(&x));
        let done = gap <= gap_rel * (1.0 + e_now.abs());
        final_res = res;
        final_g = g;
        if done || stages >= 40 {
            break;
        }
        t *= 10.0;
    }

    let f_raw = raw_f(&x);
    let multipliers: Vec<f64> =
        final_g.iter().zip(&shifts).map(|(g, s)| 1.0 / (t * (s - g).max(1e-300))).collect();
    let covariances: Vec<PsdMatrix> =
        x.q.iter().map(|q| linalg::project_psd(&HermitianMatrix::symmetrized(q))).collect();
    let state = AllocationState::new(s, covariances, f_raw.clone())?;
    let surrogate_value = anchor.energy_value(cfg, &x.q, &f_raw);

    // Budget multiplier estimate from the stationarity of interior shares.
    let budget_multiplier = if freeze {
        0.0
    } else {
        let total: f64 = f_raw.iter().sum();
        if total < f_t * (1.0 - 1e-9) {
            0.0
        } else {
            let mut est: Vec<f64> = (0..n)
                .filter(|&i| f_raw[i] > lo[i] * (1.0 + 1e-9))
                .map(|i| {
                    let de = anchor.energy_term_grad_f(cfg, i, f_raw[i]);
                    let dg = crate::surrogate::pole_term_df(s.task(i), f_raw[i]);
                    -(de + multipliers[i] * dg) * f_t
                })
                .collect();
            est.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if est.is_empty() { 0.0 } else { est[est.len() / 2].max(0.0) }
        }
    };

    let solution = SubproblemSolution {
        state,
        multipliers,
        budget_multiplier,
        constraint_values: final_g.clone(),
        surrogate_value,
        residual: final_res.residual,
        iters: total_iters,
        stages,
    };

    let max_g = final_g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max_g > CONSTRAINT_FEASIBILITY_TOL {
        return Err(CoreError::InnerNonConvergence {
            residual: max_g,
            iters: total_iters,
            best: Box::new(solution),
        });
    }
    // At the final barrier parameter the stage gradient is the Lagrangian
    // gradient at the multiplier estimates, so `residual` is a scaled KKT
    // residual for the convex subproblem. Accept it when it is small next to
    // the outer energy tolerance, even if the last stage missed the (much
    // tighter) gradient target.
    let accept = (100.0 * cfg.inner_grad_tol).max(1e-2 * cfg.energy_tol);
    if !final_res.converged && final_res.residual > accept {
        return Err(CoreError::InnerNonConvergence {
            residual: final_res.residual,
            iters: total_iters,
            best: Box::new(solution),
        });
    }
    Ok(solution)
}

/// Largest true latency-constraint value over users.
pub fn max_true_constraint(s: &NetworkScenario, state: &AllocationState) -> f64 {
    (0..s.num_users())
        .map(|i| s.latency_constraint_g(state, i))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn blend_covariances(a: &[PsdMatrix], b: &[PsdMatrix], gamma: f64) -> Result<Vec<PsdMatrix>> {
    a.iter()
        .zip(b)
        .map(|(qa, qb)| {
            let m = qa.as_matrix() * c64(1.0 - gamma, 0.0) + qb.as_matrix() * c64(gamma, 0.0);
            Ok(linalg::project_psd(&HermitianMatrix::symmetrized(&m)))
        })
        .collect()
}

/// Runs the outer loop from the feasible start `z0` until the energy change
/// drops below `cfg.energy_tol` or `cfg.max_outer` is hit. Returns the best
/// feasible iterate; every recorded iterate satisfies the true constraints
/// to [`CONSTRAINT_FEASIBILITY_TOL`].
pub fn sca_run(
    s: &NetworkScenario,
    z0: &AllocationState,
    cfg: &SurrogateConfig,
    method: ScaMethod,
) -> Result<ScaOutcome> {
    cfg.validate(s)?;
    let g0 = max_true_constraint(s, z0);
    if g0 > CONSTRAINT_FEASIBILITY_TOL {
        return Err(CoreError::Infeasible(format!(
            "starting allocation violates a latency constraint by {g0:.3e}"
        )));
    }

    let mut table = match method {
        ScaMethod::DualLipschitz => Some(LipschitzTable::analytic(s)),
        _ => None,
    };
    let mut y_state: Option<Vec<CMat>> = if method.uses_slack() {
        Some(distributed::slack_reformulate(s, &z0.covariances))
    } else {
        None
    };
    let mut warm_a: Option<DualWarmStart> = None;
    let mut warm_b: Option<SlackWarmStart> = None;

    let mut z = z0.clone();
    let mut energy = s.total_energy(&z.covariances);
    let mut gamma = cfg.step_initial;
    let mut best = (energy, z.clone());
    let mut records = Vec::new();
    let mut dual_traces = Vec::new();
    let mut dual_iters_total = 0usize;
    let mut messages_total = 0usize;
    let mut converged = false;
    let mut outer = 0usize;
    let mut strikes = 0usize;

    while outer < cfg.max_outer {
        outer += 1;
        let started = Instant::now();
        let anchor = Anchor::new(s, &z)?;

        let mut salvage = false;
        let step = match method {
            ScaMethod::Centralized => {
                match solve_subproblem(&anchor, cfg, &anchor) {
                    Ok(sol) => Some((sol, None, None)),
                    Err(CoreError::InnerNonConvergence { best: b, .. }) => {
                        salvage = true;
                        Some((*b, None, None))
                    }
                    Err(e) => return Err(e),
                }
            }
            ScaMethod::DualLipschitz => {
                let tab = table.as_mut().expect("table exists for this method");
                match distributed::dual_decomposed_solve(&anchor, cfg, tab, warm_a.as_ref()) {
                    Ok((sol, tr)) => Some((sol, Some(tr), None)),
                    Err(CoreError::DualNonConvergence { best: b, .. }) => {
                        salvage = true;
                        Some((*b, None, None))
                    }
                    Err(e) => return Err(e),
                }
            }
            ScaMethod::DualSlack | ScaMethod::DualSlackNewton => {
                let update = if method == ScaMethod::DualSlackNewton {
                    distributed::MultiplierUpdate::Newton
                } else {
                    distributed::MultiplierUpdate::Gradient
                };
                let y = y_state.as_ref().expect("slack state exists for this method");
                match distributed::dual_slack_solve(&anchor, cfg, y, update, warm_b.as_ref()) {
                    Ok((sol, tr, step)) => Some((sol, Some(tr), Some(step))),
                    Err(CoreError::DualNonConvergence { best: b, .. }) => {
                        salvage = true;
                        Some((*b, None, None))
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        let Some((sol, dtrace, slack_step)) = step else { unreachable!() };

        // A salvaged solution is only usable if it is actually feasible for
        // the true problem; otherwise hold the current iterate.
        let hat_feasible = max_true_constraint(s, &sol.state) <= CONSTRAINT_FEASIBILITY_TOL;
        if salvage {
            strikes += 1;
        } else {
            strikes = 0;
        }

        let step_gamma = gamma;
        let mut inner_iters = sol.iters;
        if let Some(tr) = &dtrace {
            dual_iters_total += tr.iters_total;
            messages_total = messages_total.saturating_add(tr.messages_total);
            inner_iters = tr.iters_total;
        }

        if hat_feasible {
            let q_new = blend_covariances(&z.covariances, &sol.state.covariances, step_gamma)?;
            let f_new: Vec<f64> = if cfg.freeze_compute {
                z.compute_rates.clone()
            } else {
                z.compute_rates
                    .iter()
                    .zip(&sol.state.compute_rates)
                    .map(|(a, b)| (1.0 - step_gamma) * a + step_gamma * b)
                    .collect()
            };
            if let (Some(y), Some(st)) = (y_state.as_mut(), slack_step.as_ref()) {
                for (yi, yhi) in y.iter_mut().zip(&st.y_hat) {
                    *yi = &*yi * c64(1.0 - step_gamma, 0.0) + yhi * c64(step_gamma, 0.0);
                }
            }
            z = AllocationState::new(s, q_new, f_new)?;
        }
        let e_new = s.total_energy(&z.covariances);
        let delta = energy - e_new;
        energy = e_new;
        let max_g = max_true_constraint(s, &z);

        if let Some(tr) = dtrace {
            dual_traces.push(tr);
        }
        if method == ScaMethod::DualLipschitz {
            warm_a = Some(DualWarmStart {
                lambda: sol.multipliers.clone(),
                lambda_budget: sol.budget_multiplier,
            });
        }
        if let Some(st) = slack_step {
            warm_b = Some(st.warm);
        }
        records.push(IterRecord {
            iter: outer,
            energy,
            energy_delta: delta,
            max_constraint: max_g,
            step: step_gamma,
            inner_iters,
            messages_cumulative: messages_total,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });

        if max_g <= CONSTRAINT_FEASIBILITY_TOL && energy < best.0 {
            best = (energy, z.clone());
        }
        gamma *= 1.0 - cfg.step_decay * gamma;

        if strikes >= 3 {
            break;
        }
        if outer >= 2 && delta.abs() <= cfg.energy_tol && hat_feasible {
            converged = true;
            break;
        }
    }

    Ok(ScaOutcome {
        state: best.1,
        energy: best.0,
        outer_iters: outer,
        converged,
        trace: SolveTrace { method, records },
        stationarity: None,
        dual_iters_total,
        messages_total,
        dual_traces,
    })
}

/// Fixed-point residual of the outer map at `z`: solve one centralized
/// subproblem anchored at `z` and measure the scaled block distance
/// `‖ẑ − z‖ / (1 + ‖z‖)`, with covariances in Frobenius norm and shares
/// normalized by the cloud budget. Zero exactly at outer stationary points.
pub fn stationarity_residual(
    s: &NetworkScenario,
    z: &AllocationState,
    cfg: &SurrogateConfig,
) -> Result<f64> {
    let anchor = Anchor::new(s, z)?;
    let sol = solve_subproblem(&anchor, cfg, &anchor)?;
    Ok(block_distance(s, z, &sol.state))
}

/// `‖a − b‖ / (1 + ‖a‖)` in the solver's block norm.
pub(crate) fn block_distance(s: &NetworkScenario, a: &AllocationState, b: &AllocationState) -> f64 {
    let f_t = s.cloud_budget();
    let mut diff = 0.0;
    let mut base = 0.0;
    for (qa, qb) in a.covariances.iter().zip(&b.covariances) {
        diff += {
            let d = qa.as_matrix() - qb.as_matrix();
            linalg::inner_re(&d, &d)
        };
        base += linalg::inner_re(qa.as_matrix(), qa.as_matrix());
    }
    for (fa, fb) in a.compute_rates.iter().zip(&b.compute_rates) {
        let d = (fa - fb) / f_t;
        diff += d * d;
        base += (fa / f_t) * (fa / f_t);
    }
    diff.sqrt() / (1.0 + base.sqrt())
}

/// Feasible starting allocation from default covariance probes: full-power
/// isotropic first, then per-user interference-free water-filling. Shares
/// are the probe's witness demands plus the spare budget spread in
/// proportion to cycle counts.
pub fn initial_allocation(s: &NetworkScenario) -> Result<AllocationState> {
    let lo = share_floors(s)?;
    for probe in default_probes(s)? {
        let report = s.multicell_feasibility(&probe);
        if !report.feasible {
            continue;
        }
        let mut f = report.witness_compute.expect("feasible report carries a witness");
        let spare = s.cloud_budget() - f.iter().sum::<f64>();
        let w_total: f64 = (0..s.num_users()).map(|i| s.task(i).cpu_cycles).sum();
        for (i, fi) in f.iter_mut().enumerate() {
            *fi = (*fi + spare * s.task(i).cpu_cycles / w_total).max(lo[i]);
        }
        let f = linalg::project_floor_capped(&f, &lo, s.cloud_budget());
        let state = AllocationState::new(s, probe, f)?;
        if max_true_constraint(s, &state) <= CONSTRAINT_FEASIBILITY_TOL {
            return Ok(state);
        }
    }
    Err(CoreError::Infeasible(
        "no default covariance probe certifies the scenario feasible".into(),
    ))
}

/// Feasible start with the cycle shares pinned to `f` (static compute
/// allocation): finds a default probe meeting every deadline at those
/// shares.
pub fn initial_allocation_fixed_f(s: &NetworkScenario, f: &[f64]) -> Result<AllocationState> {
    if f.len() != s.num_users() {
        return Err(CoreError::DimensionMismatch("one share per user required".into()));
    }
    for probe in default_probes(s)? {
        let state = AllocationState::new(s, probe, f.to_vec())?;
        if max_true_constraint(s, &state) <= CONSTRAINT_FEASIBILITY_TOL {
            return Ok(state);
        }
    }
    Err(CoreError::Infeasible(
        "no default covariance probe meets every deadline at the given shares".into(),
    ))
}

/// Default covariance probes: full-power isotropic, then interference-free
/// per-user water-filling.
fn default_probes(s: &NetworkScenario) -> Result<Vec<Vec<PsdMatrix>>> {
    let n = s.num_users();
    let iso: Vec<PsdMatrix> = (0..n)
        .map(|i| {
            let dim = s.tx_antennas(i);
            PsdMatrix::scaled_identity(dim, s.power_budget(i) / dim as f64)
        })
        .collect::<Result<_>>()?;
    let wf: Vec<PsdMatrix> = (0..n)
        .map(|i| {
            let cell = s.cell_of(i);
            Ok(waterfilling_covariance(s.home_channel(i), s.noise_power(cell), s.power_budget(i))?.0)
        })
        .collect::<Result<_>>()?;
    Ok(vec![iso, wf])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::UserTask;
    use crate::single_user::{solve_single_user, SingleUserOutcome, SingleUserProblem};
    use approx::assert_abs_diff_eq;

    fn task(c: f64, w: f64, deadline: f64) -> UserTask {
        UserTask { input_size_product: c, cpu_cycles: w, deadline, backhaul_delay: 0.0 }
    }

    fn diag_channel(gains: &[f64]) -> CMat {
        let n = gains.len();
        CMat::from_fn(n, n, |r, c| if r == c { c64(gains[r].sqrt(), 0.0) } else { c64(0.0, 0.0) })
    }

    /// Strictly feasible single-user instance with a 2-mode channel.
    fn single_user_scenario() -> NetworkScenario {
        NetworkScenario::single_user(diag_channel(&[4.0, 1.0]), 1.0, 1.0, 2e7, task(0.2, 1e5, 0.1))
            .unwrap()
    }

    fn xs(state: &mut u64) -> f64 {
        *state ^= *state << 13;
        *state ^= *state >> 7;
        *state ^= *state << 17;
        (*state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }

    fn rand_cmat(rows: usize, cols: usize, seed: &mut u64) -> CMat {
        CMat::from_fn(rows, cols, |_, _| c64(xs(seed), xs(seed)))
    }

    /// Random two-cell scenario with mild cross-interference, feasible at
    /// the default probes.
    fn toy_interference(seed: u64) -> NetworkScenario {
        let mut st = seed.max(1);
        let cells = 2;
        let per_cell = 2;
        let users = cells * per_cell;
        let channels: Vec<Vec<CMat>> = (0..users)
            .map(|u| {
                (0..cells)
                    .map(|cell| {
                        let m = rand_cmat(2, 2, &mut st);
                        if cell == u / per_cell {
                            m
                        } else {
                            m * c64(0.3, 0.0)
                        }
                    })
                    .collect()
            })
            .collect();
        NetworkScenario::new(
            vec![per_cell; cells],
            channels,
            vec![1.0; cells],
            vec![1.0; users],
            2e7,
            (0..users).map(|_| task(0.05, 1e5, 0.1)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn subproblem_fixed_point_at_single_user_optimum() {
        let s = single_user_scenario();
        let p = SingleUserProblem::from_lone_user(&s).unwrap();
        let SingleUserOutcome::Feasible(opt) = solve_single_user(&p).unwrap() else {
            panic!("instance is strictly feasible");
        };
        let z = AllocationState::new(&s, vec![opt.covariance.clone()], vec![opt.compute_rate])
            .unwrap();
        let mut cfg = SurrogateConfig::for_scenario(&s);
        cfg.energy_tol = 1e-8; // keeps the barrier gap floor below inner_gap_rel
        cfg.inner_gap_rel = 1e-10;
        cfg.inner_grad_tol = 1e-9;
        let res = stationarity_residual(&s, &z, &cfg).unwrap();
        assert!(res <= 1e-6, "fixed-point residual {res:.3e} at the single-user optimum");
    }

    #[test]
    fn subproblem_improves_surrogate_and_stays_feasible() {
        let s = toy_interference(5);
        let z0 = initial_allocation(&s).unwrap();
        let cfg = SurrogateConfig::for_scenario(&s);
        let anchor = Anchor::new(&s, &z0).unwrap();
        let sol = solve_subproblem(&anchor, &cfg, &anchor).unwrap();
        // The anchor is feasible for the subproblem, so the minimizer cannot
        // exceed the anchor objective (which equals twice the true energy).
        assert!(sol.surrogate_value <= 2.0 * anchor.energy() + 1e-12);
        let max_model = sol.constraint_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(max_model <= CONSTRAINT_FEASIBILITY_TOL);
        assert!(max_true_constraint(&s, &sol.state) <= CONSTRAINT_FEASIBILITY_TOL);
        let f_sum: f64 = sol.state.compute_rates.iter().sum();
        assert!(f_sum <= s.cloud_budget() * (1.0 + 1e-9));
        for i in 0..s.num_users() {
            assert!(sol.state.covariances[i].trace() <= s.power_budget(i) + 1e-9);
            assert!(sol.multipliers[i] >= 0.0);
        }
    }

    #[test]
    fn run_decreases_energy_and_preserves_feasibility() {
        let s = toy_interference(11);
        let z0 = initial_allocation(&s).unwrap();
        let cfg = SurrogateConfig::for_scenario(&s);
        let out = sca_run(&s, &z0, &cfg, ScaMethod::Centralized).unwrap();
        assert!(out.converged, "outer loop should settle on this easy instance");
        let e0 = s.total_energy(&z0.covariances);
        assert!(out.energy < e0, "energy {} should improve on the start {e0}", out.energy);
        for rec in &out.trace.records {
            assert!(rec.max_constraint <= CONSTRAINT_FEASIBILITY_TOL);
        }
        // Best-iterate energy is a lower envelope of the recorded energies.
        let min_rec = out.trace.records.iter().map(|r| r.energy).fold(f64::INFINITY, f64::min);
        assert!(out.energy <= min_rec + 1e-12);
    }

    #[test]
    fn step_schedule_follows_decay_rule() {
        let s = toy_interference(17);
        let z0 = initial_allocation(&s).unwrap();
        let mut cfg = SurrogateConfig::for_scenario(&s);
        cfg.max_outer = 6;
        cfg.energy_tol = 0.0_f64.next_up(); // force all six iterations
        let out = sca_run(&s, &z0, &cfg, ScaMethod::Centralized).unwrap();
        let steps: Vec<f64> = out.trace.records.iter().map(|r| r.step).collect();
        assert_abs_diff_eq!(steps[0], cfg.step_initial, epsilon = 0.0);
        for k in 1..steps.len() {
            let want = steps[k - 1] * (1.0 - cfg.step_decay * steps[k - 1]);
            assert_abs_diff_eq!(steps[k], want, epsilon = 1e-15);
        }
    }

    /// With the cross channels removed the network decouples into per-user
    /// transmit problems tied only through the cloud budget; a golden-section
    /// search over that one-dimensional split is then an independent global
    /// oracle for the whole pipeline.
    #[test]
    fn zero_cross_channels_match_share_split_oracle() {
        let h1 = diag_channel(&[4.0, 1.0]);
        let h2 = diag_channel(&[2.25, 0.25]);
        let zero = CMat::zeros(2, 2);
        let f_t = 2e7;
        let tasks = [task(0.1, 1e5, 0.1), task(0.1, 3e5, 0.1)];
        let s = NetworkScenario::new(
            vec![1, 1],
            vec![vec![h1.clone(), zero.clone()], vec![zero.clone(), h2.clone()]],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            f_t,
            tasks.to_vec(),
        )
        .unwrap();

        let su_energy = |h: &CMat, t: &UserTask, share: f64| -> f64 {
            let p = SingleUserProblem::new(h.clone(), 1.0, 1.0, share, t.clone()).unwrap();
            match solve_single_user(&p).unwrap() {
                SingleUserOutcome::Feasible(sol) | SingleUserOutcome::Boundary(sol) => sol.energy,
                SingleUserOutcome::Infeasible { .. } => f64::INFINITY,
            }
        };
        let split_energy =
            |f1: f64| su_energy(&h1, &tasks[0], f1) + su_energy(&h2, &tasks[1], f_t - f1);

        // Golden-section search over the share split (the budget is active
        // at any optimum since energy strictly decreases in each share).
        let (mut a, mut b) = (1.8e6, 1.25e7);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut c1, mut c2) = (b - phi * (b - a), a + phi * (b - a));
        let (mut f1v, mut f2v) = (split_energy(c1), split_energy(c2));
        for _ in 0..200 {
            if f1v < f2v {
                b = c2;
                c2 = c1;
                f2v = f1v;
                c1 = b - phi * (b - a);
                f1v = split_energy(c1);
            } else {
                a = c1;
                c1 = c2;
                f1v = f2v;
                c2 = a + phi * (b - a);
                f2v = split_energy(c2);
            }
        }
        let oracle = split_energy(0.5 * (a + b));

        let z0 = initial_allocation(&s).unwrap();
        let mut cfg = SurrogateConfig::for_scenario(&s);
        cfg.energy_tol = 1e-9;
        let out = sca_run(&s, &z0, &cfg, ScaMethod::Centralized).unwrap();
        assert!(
            out.energy >= oracle - 1e-6,
            "solver energy {} beats the global oracle {oracle}",
            out.energy
        );
        assert!(
            out.energy <= oracle + 1e-4 * (1.0 + oracle),
            "solver energy {} misses the oracle {oracle}",
            out.energy
        );
    }

    #[test]
    fn frozen_compute_never_moves_shares_and_joint_does_better() {
        let s = toy_interference(23);
        // Static split proportional to cycle demands.
        let w_total: f64 = (0..s.num_users()).map(|i| s.task(i).cpu_cycles).sum();
        let f_static: Vec<f64> = (0..s.num_users())
            .map(|i| s.task(i).cpu_cycles * s.cloud_budget() / w_total)
            .collect();
        let z0 = initial_allocation_fixed_f(&s, &f_static).unwrap();
        let mut cfg = SurrogateConfig::for_scenario(&s);
        cfg.freeze_compute = true;
        let frozen = sca_run(&s, &z0, &cfg, ScaMethod::Centralized).unwrap();
        for rec in &frozen.trace.records {
            assert!(rec.max_constraint <= CONSTRAINT_FEASIBILITY_TOL);
        }
        assert_eq!(frozen.state.compute_rates, f_static);

        let z0_joint = initial_allocation(&s).unwrap();
        cfg.freeze_compute = false;
        let joint = sca_run(&s, &z0_joint, &cfg, ScaMethod::Centralized).unwrap();
        assert!(joint.energy <= frozen.energy + 1e-6);
    }

    #[test]
    fn initial_allocation_is_feasible() {
        let s = toy_interference(29);
        let z0 = initial_allocation(&s).unwrap();
        assert!(max_true_constraint(&s, &z0) <= CONSTRAINT_FEASIBILITY_TOL);
        let f_sum: f64 = z0.compute_rates.iter().sum();
        assert!(f_sum <= s.cloud_budget() * (1.0 + 1e-9));
    }
}
