//! Dual (per-cell decomposable) solvers for the convex subproblems.
//!
//! Two reformulations make the anchored subproblem separable across users
//! once multipliers are fixed:
//!
//! * **Quadratic model** ([`SeparableModel`]): the exact convex rate term of
//!   each latency constraint is replaced by its linearization plus per-block
//!   quadratic penalties with curvature constants from a [`LipschitzTable`].
//!   Per-pair constants bound single-block curvature; the table carries a
//!   built-in factor-two margin for cross-block coupling and every solve
//!   re-validates the majorization at its output, doubling the table and
//!   restarting on violation (at most three times).
//! * **Slack model** ([`dual_slack_solve`]): one PSD slack `Y_i` per user is
//!   pinned under the received signal-plus-interference covariance
//!   `Y_i ⪯ I_i(Q)`; the rate then depends on `Y_i` alone and the couplings
//!   move into PSD multipliers `Ω_i`. The `Y` blocks have a closed-form
//!   eigenvalue update; multipliers ascend by subgradient steps or by
//!   diagonal-Newton steps with finite-difference curvature.
//!
//! Both solvers exchange two broadcast rounds per cell and dual iteration,
//! keep a best-dual-value safeguard (steps that lose ground are rolled back
//! and the stepsize halved), and finish with a feasibility polish that may
//! perturb the true energy by at most 1%.

use crate::error::{CoreError, Result};
use crate::linalg::{self, c64, fro_norm, inner_re, trace_re, CMat, HermitianMatrix, PsdMatrix};
use crate::model::{latency_g_from_parts, AllocationState, NetworkScenario, UserTask};
use crate::sca::{self, ConstraintModel, SubproblemSolution};
use crate::spg::{self, BlockPoint, SpgOptions};
use crate::surrogate::{pole_term_df, Anchor, SurrogateConfig};

use std::f64::consts::LN_2;

/// Relative slack when validating that the quadratic model dominates the
/// anchored reference model.
const MAJORIZATION_TOL_REL: f64 = 1e-9;

/// Relative tolerance of the dual ascent safeguard.
const ASCENT_TOL_REL: f64 = 1e-8;

/// Cap on the relative true-energy perturbation a feasibility polish may
/// introduce.
const POLISH_LIMIT: f64 = 1e-2;

/// Floor on finite-difference dual curvature in Newton multiplier steps.
const CURVATURE_FLOOR: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Curvature tables for the quadratic constraint model.

/// How the entries of a [`LipschitzTable`] were obtained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LipschitzProvenance {
    /// Worst-case bounds from channel spectral norms and noise floors.
    Analytic,
    /// Sampled curvature estimates, inflated by two, drawn deterministically
    /// from the given seed.
    Backtracked { seed: u64 },
}

/// Per-(constraint, variable) quadratic penalty weights of the separable
/// constraint model. Entry `(i, j)` bounds the curvature of user `i`'s exact
/// rate term in the covariance of user `j`; it is zero for same-cell pairs
/// `j ≠ i`, whose covariances never enter that term.
#[derive(Debug, Clone)]
pub struct LipschitzTable {
    entries: Vec<Vec<f64>>,
    provenance: LipschitzProvenance,
    doublings: u32,
}

impl LipschitzTable {
    /// Worst-case table from [`analytic_lipschitz_bound`].
    pub fn analytic(s: &NetworkScenario) -> Self {
        let n = s.num_users();
        let entries = (0..n)
            .map(|i| (0..n).map(|j| analytic_lipschitz_bound(s, i, j)).collect())
            .collect();
        Self { entries, provenance: LipschitzProvenance::Analytic, doublings: 0 }
    }

    /// Sampled table: for every live pair, the largest linearization gap
    /// ratio over eight random single-block perturbations, inflated by two.
    /// Usually far smaller than the analytic table; the run-time validation
    /// backstops the sampling.
    pub fn backtracked(s: &NetworkScenario, seed: u64) -> Result<Self> {
        let n = s.num_users();
        let mut state = seed;
        let mut entries = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if analytic_lipschitz_bound(s, i, j) == 0.0 {
                    continue;
                }
                let mut worst = 0.0f64;
                for _ in 0..8 {
                    let q: Vec<CMat> = (0..n)
                        .map(|u| sampled_psd(s.tx_antennas(u), s.power_budget(u), &mut state))
                        .collect();
                    let alt = sampled_psd(s.tx_antennas(j), s.power_budget(j), &mut state);
                    if let Some(ratio) = curvature_ratio(s, &q, i, j, &alt)? {
                        worst = worst.max(ratio);
                    }
                }
                entries[i][j] = 2.0 * worst;
            }
        }
        Ok(Self { entries, provenance: LipschitzProvenance::Backtracked { seed }, doublings: 0 })
    }

    #[cfg(test)]
    pub(crate) fn with_entries(entries: Vec<Vec<f64>>) -> Self {
        Self { entries, provenance: LipschitzProvenance::Analytic, doublings: 0 }
    }

    /// Quadratic weight of user `var`'s covariance in user `owner`'s
    /// constraint.
    pub fn entry(&self, owner: usize, var: usize) -> f64 {
        self.entries[owner][var]
    }

    /// A copy with every entry doubled; used when run-time validation finds
    /// the model failing to dominate the reference.
    pub fn doubled(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|row| row.iter().map(|&x| 2.0 * x).collect())
                .collect(),
            provenance: self.provenance.clone(),
            doublings: self.doublings + 1,
        }
    }

    pub fn provenance(&self) -> &LipschitzProvenance {
        &self.provenance
    }

    /// How many times the table has been doubled by validation failures.
    pub fn doublings(&self) -> u32 {
        self.doublings
    }
}

/// Worst-case curvature of user `owner`'s exact rate term in the covariance
/// of user `var`: `‖H‖₂⁴ / (ln2 · σ⁴)` with `H` the channel of `var` into
/// `owner`'s cell and `σ²` that cell's noise power. Zero for same-cell pairs
/// `var ≠ owner`. The bound comes from the receive covariance never dropping
/// below the noise floor.
pub fn analytic_lipschitz_bound(s: &NetworkScenario, owner: usize, var: usize) -> f64 {
    let cell = s.cell_of(owner);
    if var != owner && s.cell_of(var) == cell {
        return 0.0;
    }
    let gain = linalg::spectral_norm_sq(s.channel(var, cell));
    let noise = s.noise_power(cell);
    gain * gain / (LN_2 * noise * noise)
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn sm_unit(state: &mut u64) -> f64 {
    (splitmix(state) >> 11) as f64 / (1u64 << 53) as f64
}

fn sampled_psd(dim: usize, trace_cap: f64, state: &mut u64) -> CMat {
    let a = CMat::from_fn(dim, dim, |_, _| {
        c64(2.0 * sm_unit(state) - 1.0, 2.0 * sm_unit(state) - 1.0)
    });
    let g = &a * a.adjoint();
    let tr = trace_re(&g);
    let target = trace_cap * (0.3 + 0.7 * sm_unit(state));
    if tr <= 0.0 {
        CMat::zeros(dim, dim)
    } else {
        g * c64(target / tr, 0.0)
    }
}

/// Exact rate term of user `i` (signal-plus-interference log-det) at an
/// arbitrary covariance profile.
fn rate_plus_at(s: &NetworkScenario, q: &[CMat], i: usize) -> Result<f64> {
    let cell = s.cell_of(i);
    let h = s.home_channel(i);
    let aug =
        HermitianMatrix::symmetrized(&(candidate_interference(s, q, cell) + h * &q[i] * h.adjoint()));
    linalg::log_det_pd(&aug)
}

/// Noise plus out-of-cell interference at `cell`'s receiver.
fn candidate_interference(s: &NetworkScenario, q: &[CMat], cell: usize) -> CMat {
    let dim = s.rx_antennas(cell);
    let mut r = CMat::identity(dim, dim) * c64(s.noise_power(cell), 0.0);
    for j in 0..s.num_users() {
        if s.cell_of(j) != cell {
            let h = s.channel(j, cell);
            r += h * &q[j] * h.adjoint();
        }
    }
    r
}

/// Gradient of [`rate_plus_at`] for user `i` in the covariance of `j`.
fn rate_plus_grad_at(s: &NetworkScenario, q: &[CMat], i: usize, j: usize) -> Result<CMat> {
    let cell = s.cell_of(i);
    let h_own = s.home_channel(i);
    let aug = HermitianMatrix::symmetrized(
        &(candidate_interference(s, q, cell) + h_own * &q[i] * h_own.adjoint()),
    );
    let inv = linalg::inv_pd(&aug)?;
    let h = s.channel(j, cell);
    Ok(linalg::symmetrize(&(h.adjoint() * inv * h * c64(1.0 / LN_2, 0.0))))
}

/// Linearization-gap ratio of user `i`'s rate term when only block `j`
/// moves from `q[j]` to `alt`; `None` for negligible moves.
fn curvature_ratio(
    s: &NetworkScenario,
    q: &[CMat],
    i: usize,
    j: usize,
    alt: &CMat,
) -> Result<Option<f64>> {
    let delta = alt - &q[j];
    let norm_sq = inner_re(&delta, &delta);
    if norm_sq < 1e-12 {
        return Ok(None);
    }
    let base = rate_plus_at(s, q, i)?;
    let grad = rate_plus_grad_at(s, q, i, j)?;
    let mut moved = q.to_vec();
    moved[j] = alt.clone();
    let gap = base + inner_re(&grad, &delta) - rate_plus_at(s, &moved, i)?;
    Ok(Some(gap.max(0.0) / norm_sq))
}

// ---------------------------------------------------------------------------
// Separable quadratic constraint model.

/// Fully user-separable convex upper model of the latency constraints: per
/// constraint, a linearization of the exact rate term plus quadratic
/// penalties `L_{i,j}‖ΔQ_j‖²`, sharing the interference linearization of the
/// anchored reference model. Tight (and gradient-matching) at the anchor.
pub struct SeparableModel<'a> {
    anchor: &'a Anchor<'a>,
    /// `lin[i][j]`: combined first-order matrix of `ΔQ_j` in constraint `i`;
    /// `None` when the constraint never sees that covariance.
    lin: Vec<Vec<Option<CMat>>>,
    coeff: Vec<Vec<f64>>,
    /// `−r_i` at the anchor, the constant rate part of each constraint.
    base: Vec<f64>,
}

impl<'a> SeparableModel<'a> {
    pub fn new(anchor: &'a Anchor<'a>, table: &LipschitzTable) -> Self {
        let s = anchor.scenario();
        let n = s.num_users();
        let mut lin: Vec<Vec<Option<CMat>>> = Vec::with_capacity(n);
        let mut coeff = vec![vec![0.0; n]; n];
        for i in 0..n {
            let cell = s.cell_of(i);
            let mut row = Vec::with_capacity(n);
            for j in 0..n {
                if j == i {
                    let h = s.home_channel(i);
                    let m = h.adjoint() * anchor.s_inv(i) * h * c64(1.0 / LN_2, 0.0);
                    row.push(Some(linalg::symmetrize(&m)));
                } else if s.cell_of(j) != cell {
                    let h = s.channel(j, cell);
                    let plus = h.adjoint() * anchor.s_inv(i) * h * c64(1.0 / LN_2, 0.0);
                    let pi = anchor.pi_minus(cell, j).expect("cross-cell pair has a penalty");
                    row.push(Some(linalg::symmetrize(&(plus + pi))));
                } else {
                    row.push(None);
                    continue;
                }
                coeff[i][j] = table.entry(i, j);
            }
            lin.push(row);
        }
        let base = anchor.rates().iter().map(|r| -r).collect();
        Self { anchor, lin, coeff, base }
    }

    /// `Σ_i mult_i × (first-order matrix, quadratic weight)` of block `j`,
    /// the only pieces of the weighted constraint sum that touch `Q_j`.
    pub(crate) fn aggregate_for_block(&self, j: usize, mult: &[f64]) -> (CMat, f64) {
        let dim = self.anchor.scenario().tx_antennas(j);
        let mut lin = CMat::zeros(dim, dim);
        let mut rho = 0.0;
        for (i, &m) in mult.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            if let Some(l) = &self.lin[i][j] {
                lin += l * c64(m, 0.0);
                rho += m * self.coeff[i][j];
            }
        }
        (lin, rho)
    }
}

impl ConstraintModel for SeparableModel<'_> {
    fn constraint_values(&self, q: &[CMat], f: &[f64]) -> Result<Vec<f64>> {
        let s = self.anchor.scenario();
        let n = s.num_users();
        let anchor_q = &self.anchor.state().covariances;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut v = self.base[i] + latency_g_from_parts(s.task(i), 0.0, f[i]);
            for j in 0..n {
                if let Some(l) = &self.lin[i][j] {
                    let dq = &q[j] - anchor_q[j].as_matrix();
                    v += self.coeff[i][j] * inner_re(&dq, &dq) - inner_re(l, &dq);
                }
            }
            out.push(v);
        }
        Ok(out)
    }

    fn weighted_gradient(
        &self,
        q: &[CMat],
        f: &[f64],
        mult: &[f64],
    ) -> Result<(Vec<CMat>, Vec<f64>)> {
        let s = self.anchor.scenario();
        let n = s.num_users();
        let anchor_q = &self.anchor.state().covariances;
        let mut gq = Vec::with_capacity(n);
        for j in 0..n {
            let (lin, rho) = self.aggregate_for_block(j, mult);
            let dq = &q[j] - anchor_q[j].as_matrix();
            gq.push(linalg::symmetrize(&(dq * c64(2.0 * rho, 0.0) - lin)));
        }
        let gf = (0..n).map(|i| mult[i] * pole_term_df(s.task(i), f[i])).collect();
        Ok((gq, gf))
    }
}

// ---------------------------------------------------------------------------
// Shared dual-solver plumbing.

/// Warm-start multipliers for [`dual_decomposed_solve`].
#[derive(Debug, Clone)]
pub struct DualWarmStart {
    pub lambda: Vec<f64>,
    pub lambda_budget: f64,
}

/// Warm-start multipliers for [`dual_slack_solve`].
#[derive(Debug, Clone)]
pub struct SlackWarmStart {
    pub lambda: Vec<f64>,
    pub lambda_budget: f64,
    pub omega: Vec<CMat>,
}

/// How dual multipliers are advanced in the slack solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiplierUpdate {
    /// Projected subgradient steps with a diminishing stepsize.
    Gradient,
    /// Diagonal-Newton steps with central finite-difference curvature.
    Newton,
}

/// One accepted dual iteration.
#[derive(Debug, Clone)]
pub struct DualTraceRecord {
    /// Dual iteration count (including rejected iterations) at this record.
    pub iter: usize,
    pub dual_value: f64,
    /// Largest scaled primal violation at the block minimizers.
    pub max_violation: f64,
    pub messages_cumulative: usize,
    /// Safeguard rollbacks so far.
    pub rejected_steps: usize,
}

/// Accepted-iteration history of one dual solve, plus totals that also
/// count rejected iterations.
#[derive(Debug, Clone)]
pub struct DualTrace {
    pub records: Vec<DualTraceRecord>,
    pub iters_total: usize,
    pub messages_total: usize,
    pub rejected_total: usize,
}

/// Slack-solver output the outer loop needs besides the solution: the slack
/// matrices to relax toward, and multipliers to warm-start the next solve.
#[derive(Debug, Clone)]
pub struct SlackStep {
    pub y_hat: Vec<CMat>,
    pub warm: SlackWarmStart,
}

/// `1 + |true constraint value|` per user at the anchor; the scale used for
/// violations and complementarity throughout the dual solvers.
fn anchor_constraint_scales(anchor: &Anchor<'_>) -> Vec<f64> {
    let s = anchor.scenario();
    (0..s.num_users())
        .map(|i| {
            let g = latency_g_from_parts(s.task(i), anchor.rates()[i], anchor.state().compute_rates[i]);
            1.0 + g.abs()
        })
        .collect()
}

fn to_psd(q: &[CMat]) -> Vec<PsdMatrix> {
    q.iter().map(|m| linalg::project_psd(&HermitianMatrix::symmetrized(m))).collect()
}

fn true_energy(s: &NetworkScenario, q: &[CMat]) -> f64 {
    s.total_energy(&to_psd(q))
}

/// Minimizes one user's covariance block of a dual Lagrangian:
/// `energy term + ρ‖ΔQ‖² − ⟨lin, ΔQ⟩` over the power-capped PSD cone.
fn solve_q_block(
    anchor: &Anchor<'_>,
    cfg: &SurrogateConfig,
    j: usize,
    start: &CMat,
    lin: &CMat,
    rho: f64,
    opts: &SpgOptions,
) -> Result<CMat> {
    let s = anchor.scenario();
    let anchor_q = anchor.state().covariances[j].as_matrix().clone();
    let f_anchor = anchor.state().compute_rates[j];
    let power = s.power_budget(j);
    let value = |bp: &BlockPoint| -> f64 {
        let dq = &bp.q[0] - &anchor_q;
        anchor.energy_term(cfg, j, &bp.q[0], f_anchor) + rho * inner_re(&dq, &dq)
            - inner_re(lin, &dq)
    };
    let grad = |bp: &BlockPoint| -> Result<BlockPoint> {
        let dq = &bp.q[0] - &anchor_q;
        let g = anchor.energy_term_grad_q(cfg, j, &bp.q[0])? + dq * c64(2.0 * rho, 0.0) - lin;
        Ok(BlockPoint { q: vec![linalg::symmetrize(&g)], f: vec![] })
    };
    let project = |mut bp: BlockPoint| -> BlockPoint {
        let h = HermitianMatrix::symmetrized(&bp.q[0]);
        bp.q[0] = linalg::project_power_psd(&h, power)
            .expect("power budgets are validated positive")
            .as_matrix()
            .clone();
        bp
    };
    let res =
        spg::minimize(BlockPoint { q: vec![start.clone()], f: vec![] }, value, grad, project, opts)?;
    Ok(res.point.q.into_iter().next().expect("one covariance block"))
}

/// All cycle-share blocks at the given multipliers, clamped to their floors
/// and the cloud budget box.
fn f_blocks(
    anchor: &Anchor<'_>,
    cfg: &SurrogateConfig,
    lo: &[f64],
    lambda: &[f64],
    lambda_budget: f64,
) -> Result<Vec<f64>> {
    let s = anchor.scenario();
    if cfg.freeze_compute {
        return Ok(anchor.state().compute_rates.clone());
    }
    let f_t = s.cloud_budget();
    (0..s.num_users())
        .map(|i| {
            let f = per_cell_f_minimizer(
                s.task(i),
                lambda[i],
                lambda_budget / f_t,
                anchor.state().compute_rates[i],
                cfg.proximal_f[i],
            )?;
            Ok(f.clamp(lo[i], f_t))
        })
        .collect()
}

/// Minimizes one cycle-share block of a dual Lagrangian,
/// `(c_f/2)(f − f̄)² + λ · c f/(f T̃ − w) + λ_B · f`,
/// over the pole-guarded half-line. The derivative is strictly increasing
/// there, so a safeguarded Newton/bisection finds the unique root; with a
/// zero latency multiplier the minimizer is the closed form
/// `max(guard, f̄ − λ_B/c_f)`.
pub fn per_cell_f_minimizer(
    task: &UserTask,
    lambda: f64,
    lambda_budget: f64,
    f_anchor: f64,
    proximal: f64,
) -> Result<f64> {
    if !(proximal > 0.0 && proximal.is_finite()) {
        return Err(CoreError::InvalidInput(format!(
            "cycle-share proximal weight must be positive, got {proximal}"
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) || !lambda_budget.is_finite() || !f_anchor.is_finite()
    {
        return Err(CoreError::InvalidInput(
            "cycle-share block needs finite inputs and a nonnegative latency multiplier".into(),
        ));
    }
    let pole = task.compute_pole();
    let guard = pole + 1e-9 * (1.0 + pole.abs());
    if lambda == 0.0 || task.cpu_cycles == 0.0 {
        return Ok((f_anchor - lambda_budget / proximal).max(guard));
    }
    let c = task.input_size_product;
    let w = task.cpu_cycles;
    let t = task.effective_deadline();
    let dphi = |f: f64| -> f64 {
        let den = f * t - w;
        proximal * (f - f_anchor) - lambda * c * w / (den * den) + lambda_budget
    };
    let d2phi = |f: f64| -> f64 {
        let den = f * t - w;
        proximal + 2.0 * lambda * c * w * t / (den * den * den)
    };
    if dphi(guard) >= 0.0 {
        return Ok(guard);
    }
    let mut hi = f_anchor.max(guard) + 1.0 + pole.abs();
    for _ in 0..200 {
        if dphi(hi) > 0.0 {
            break;
        }
        hi = guard + 2.0 * (hi - guard);
    }
    if dphi(hi) <= 0.0 {
        return Err(CoreError::Inconsistent(
            "cycle-share stationarity could not be bracketed".into(),
        ));
    }
    let mut lo = guard;
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let g = dphi(x);
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        if hi - lo <= 1e-13 * (1.0 + hi.abs()) {
            break;
        }
        let mut next = x - g / d2phi(x);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        x = next;
    }
    Ok(0.5 * (lo + hi))
}

/// Projected Newton step on one scalar multiplier of a concave dual:
/// `[λ + β · grad / max(−curvature, floor)]⁺`. Recovers the exact maximizer
/// of a quadratic dual in one unit step.
pub fn newton_multiplier_step(lambda: f64, grad: f64, curvature: f64, beta: f64) -> f64 {
    let denom = (-curvature).max(CURVATURE_FLOOR);
    (lambda + beta * grad / denom).max(0.0)
}

// ---------------------------------------------------------------------------
// Quadratic-model dual solver.

/// Solves the anchored subproblem under the separable quadratic constraint
/// model by multiplier ascent, re-validating the model against the anchored
/// reference at the output (doubling `table` and restarting on violation).
/// Returns the polished solution and the dual trace; a solve that ran out of
/// iterations surfaces its best polished iterate inside the error.
pub fn dual_decomposed_solve(
    anchor: &Anchor<'_>,
    cfg: &SurrogateConfig,
    table: &mut LipschitzTable,
    warm: Option<&DualWarmStart>,
) -> Result<(SubproblemSolution, DualTrace)> {
    for attempt in 0..4 {
        let model = SeparableModel::new(anchor, table);
        let out = dual_decomposed_attempt(anchor, cfg, &model, warm)?;
        if majorization_holds(anchor, &model, &out.solution)? {
            return if out.converged {
                Ok((out.solution, out.trace))
            } else {
                Err(CoreError::DualNonConvergence {
                    residual: out.solution.residual,
                    iters: out.solution.iters,
                    best: Box::new(out.solution),
                })
            };
        }
        if attempt < 3 {
            *table = table.doubled();
        }
    }
    Err(CoreError::Inconsistent(
        "quadratic constraint model kept undershooting the reference after three doublings".into(),
    ))
}

struct DualAttempt {
    solution: SubproblemSolution,
    trace: DualTrace,
    converged: bool,
}

fn dual_decomposed_attempt(
    anchor: &Anchor<'_>,
    cfg: &SurrogateConfig,
    model: &SeparableModel<'_>,
    warm: Option<&DualWarmStart>,
) -> Result<DualAttempt> {
    let s = anchor.scenario();
    let n = s.num_users();
    let f_t = s.cloud_budget();
    let lo = sca::share_floors(s)?;
    let msgs_per_iter = 2 * s.num_cells();
    let scale = anchor_constraint_scales(anchor);

    let anchor_q: Vec<CMat> =
        anchor.state().covariances.iter().map(|m| m.as_matrix().clone()).collect();
    let mut lambda: Vec<f64> = warm
        .map(|w| w.lambda.iter().map(|x| x.max(0.0)).collect())
        .unwrap_or_else(|| vec![0.0; n]);
    let mut lambda_f = warm.map(|w| w.lambda_budget.max(0.0)).unwrap_or(0.0);
    let mut beta_scale =
        cfg.dual_beta0.unwrap_or_else(|| 1.0 / (1.0 + anchor.energy().abs()));

    let spg_opts =
        SpgOptions { max_iters: 800, grad_tol: cfg.inner_grad_tol, ..SpgOptions::default() };
    let mut q_hat = anchor_q.clone();
    let mut records = Vec::new();
    let mut rejected = 0usize;
    let mut accepted = 0usize;
    let mut iters = 0usize;
    let mut best_dual = f64::NEG_INFINITY;
    let mut best_mult = (lambda.clone(), lambda_f);
    let mut best_kkt = f64::INFINITY;
    let mut best_primal: Option<(Vec<CMat>, Vec<f64>, Vec<f64>, f64)> = None;
    let mut converged = false;

    for _ in 0..cfg.max_dual_iters {
        iters += 1;
        for j in 0..n {
            let (lin, rho) = model.aggregate_for_block(j, &lambda);
            let next = solve_q_block(anchor, cfg, j, &q_hat[j], &lin, rho, &spg_opts)?;
            q_hat[j] = next;
        }
        let f_hat = f_blocks(anchor, cfg, &lo, &lambda, lambda_f)?;

        let vals = model.constraint_values(&q_hat, &f_hat)?;
        let budget_g = (f_hat.iter().sum::<f64>() - f_t) / f_t;
        let e_model = anchor.energy_value(cfg, &q_hat, &f_hat);
        let dual_value = e_model
            + lambda.iter().zip(&vals).map(|(l, v)| l * v).sum::<f64>()
            + lambda_f * budget_g;

        let mut primal_viol = budget_g.max(0.0);
        let mut kkt = primal_viol.max(lambda_f.min((-budget_g).max(0.0)));
        for i in 0..n {
            let v = vals[i] / scale[i];
            primal_viol = primal_viol.max(v.max(0.0));
            kkt = kkt.max(v.max(0.0)).max(lambda[i].min((-v).max(0.0)));
        }

        if kkt < best_kkt {
            best_kkt = kkt;
            best_primal = Some((q_hat.clone(), f_hat.clone(), lambda.clone(), lambda_f));
        }
        if kkt <= cfg.dual_tol {
            records.push(DualTraceRecord {
                iter: iters,
                dual_value,
                max_violation: primal_viol,
                messages_cumulative: msgs_per_iter * iters,
                rejected_steps: rejected,
            });
            converged = true;
            break;
        }
        if dual_value < best_dual - ASCENT_TOL_REL * (1.0 + best_dual.abs()) {
            lambda = best_mult.0.clone();
            lambda_f = best_mult.1;
            beta_scale *= 0.5;
            rejected += 1;
            continue;
        }
        if dual_value > best_dual {
            best_dual = dual_value;
            best_mult = (lambda.clone(), lambda_f);
        }
        records.push(DualTraceRecord {
            iter: iters,
            dual_value,
            max_violation: primal_viol,
            messages_cumulative: msgs_per_iter * iters,
            rejected_steps: rejected,
        });
        accepted += 1;
        let beta = beta_scale / (1.0 + accepted as f64);
        for i in 0..n {
            lambda[i] = (lambda[i] + beta * vals[i] / scale[i]).max(0.0);
        }
        lambda_f = (lambda_f + beta * budget_g).max(0.0);
    }

    let (q_b, f_b, lam_b, lamf_b) = best_primal.expect("the dual loop ran at least once");
    let polished = match polish_quadratic(anchor, cfg, model, &lo, &q_b, &f_b) {
        Ok(v) => v,
        // A stalled dual may sit too far out for the 1% polish budget; fall
        // back to the anchor (a zero-progress but valid solution).
        Err(CoreError::PolishFailure { .. }) if !converged => {
            let anchor_f = anchor.state().compute_rates.clone();
            let vals = model.constraint_values(&anchor_q, &anchor_f)?;
            let e_model = anchor.energy_value(cfg, &anchor_q, &anchor_f);
            (anchor.state().clone(), vals, e_model)
        }
        Err(e) => return Err(e),
    };
    let (state, constraint_values, surrogate_value) = polished;
    let solution = SubproblemSolution {
        state,
        multipliers: lam_b,
        budget_multiplier: lamf_b,
        constraint_values,
        surrogate_value,
        residual: best_kkt,
        iters,
        stages: 1,
    };
    let trace = DualTrace {
        records,
        iters_total: iters,
        messages_total: msgs_per_iter * iters,
        rejected_total: rejected,
    };
    Ok(DualAttempt { solution, trace, converged })
}

/// Projects the shares into their box, then blends toward the anchor until
/// the quadratic model is satisfied; enforces the 1% energy-perturbation
/// budget.
fn polish_quadratic(
    anchor: &Anchor<'_>,
    cfg: &SurrogateConfig,
    model: &SeparableModel<'_>,
    lo: &[f64],
    q_hat: &[CMat],
    f_hat: &[f64],
) -> Result<(AllocationState, Vec<f64>, f64)> {
    let s = anchor.scenario();
    let tol = sca::CONSTRAINT_FEASIBILITY_TOL;
    let f_proj = if cfg.freeze_compute {
        f_hat.to_vec()
    } else {
        linalg::project_floor_capped(f_hat, lo, s.cloud_budget())
    };
    let e_raw = true_energy(s, q_hat);
    let mut q_f = q_hat.to_vec();
    let mut f_f = f_proj;
    let mut vals = model.constraint_values(&q_f, &f_f)?;
    if vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max) > tol {
        let anchor_q = &anchor.state().covariances;
        let anchor_f = &anchor.state().compute_rates;
        let blend = |theta: f64| -> (Vec<CMat>, Vec<f64>) {
            let q = (0..q_f.len())
                .map(|j| &q_f[j] * c64(1.0 - theta, 0.0) + anchor_q[j].as_matrix() * c64(theta, 0.0))
                .collect();
            let f = f_f
                .iter()
                .zip(anchor_f)
                .map(|(a, b)| (1.0 - theta) * a + theta * b)
                .collect();
            (q, f)
        };
        let (q1, f1) = blend(1.0);
        let v1 = model.constraint_values(&q1, &f1)?;
        if v1.iter().cloned().fold(f64::NEG_INFINITY, f64::max) > tol {
            return Err(CoreError::Inconsistent(
                "anchor allocation violates its own constraint model".into(),
            ));
        }
        let mut lo_t = 0.0;
        let mut best = (q1, f1, v1);
        let mut hi_t = 1.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo_t + hi_t);
            let (qm, fm) = blend(mid);
            let vm = model.constraint_values(&qm, &fm)?;
            if vm.iter().cloned().fold(f64::NEG_INFINITY, f64::max) <= tol {
                hi_t = mid;
                best = (qm, fm, vm);
            } else {
                lo_t = mid;
            }
        }
        (q_f, f_f, vals) = best;
    }
    let e_fin = true_energy(s, &q_f);
    let perturbation = (e_fin - e_raw).abs() / (1.0 + e_raw.abs());
    if perturbation > POLISH_LIMIT {
        return Err(CoreError::PolishFailure { perturbation, limit: POLISH_LIMIT });
    }
    let surrogate_value = anchor.energy_value(cfg, &q_f, &f_f);
    let state = AllocationState::new(s, to_psd(&q_f), f_f)?;
    Ok((state, vals, surrogate_value))
}

/// Checks that the quadratic model dominates the anchored reference model on
/// the relaxation segment between the solution and the anchor — the property
/// the outer loop's feasibility argument rests on.
fn majorization_holds(
    anchor: &Anchor<'_>,
    model: &SeparableModel<'_>,
    sol: &SubproblemSolution,
) -> Result<bool> {
    let scale = anchor_constraint_scales(anchor);
    let anchor_q = &anchor.state().covariances;
    let anchor_f = &anchor.state().compute_rates;
    let sol_q: Vec<CMat> = sol.state.covariances.iter().map(|m| m.as_matrix().clone()).collect();
    for &theta in &[0.0, 0.25, 0.5, 0.75] {
        let q: Vec<CMat> = (0..sol_q.len())
            .map(|j| &sol_q[j] * c64(1.0 - theta, 0.0) + anchor_q[j].as_matrix() * c64(theta, 0.0))
            .collect();
        let f: Vec<f64> = sol
            .state
            .compute_rates
            .iter()
            .zip(anchor_f)
            .map(|(a, b)| (1.0 - theta) * a + theta * b)
            .collect();
        let quad = model.constraint_values(&q, &f)?;
        let reference = anchor.g_tilde(&q, &f)?;
        for i in 0..quad.len() {
            if reference[i] > quad[i] + MAJORIZATION_TOL_REL * scale[i] {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// Slack reformulation.

/// Received signal-plus-interference covariance `I_i(Q)` of every user: the
/// natural anchor for the slack matrices (`Y_i = I_i` makes the slack model
/// coincide with the anchored reference).
pub fn slack_reformulate(s: &NetworkScenario, q: &[PsdMatrix]) -> Vec<CMat> {
    let cmats: Vec<CMat> = q.iter().map(|m| m.as_matrix().clone()).collect();
    (0..s.num_users()).map(|i| signal_plus_interference(s, &cmats, i)).collect()
}

/// `I_i(Q) = H_i Q_i H_iᴴ + Σ_{j homed elsewhere} H_j Q_j H_jᴴ` at user
/// `i`'s home receiver (no noise term).
fn signal_plus_interference(s: &NetworkScenario, q: &[CMat], i: usize) -> CMat {
    let cell = s.cell_of(i);
    let dim = s.rx_antennas(cell);
    let mut acc = CMat::zeros(dim, dim);
    for j in 0..s.num_users() {
        if j == i || s.cell_of(j) != cell {
            let h = s.channel(j, cell);
            acc += h * &q[j] * h.adjoint();
        }
    }
    linalg::symmetrize(&acc)
}

/// `log2 det(σ² I + Y)`: the rate a slack matrix certifies.
fn slack_rate(y: &CMat, noise: f64) -> Result<f64> {
    let dim = y.nrows();
    let aug = HermitianMatrix::symmetrized(&(CMat::identity(dim, dim) * c64(noise, 0.0) + y));
    linalg::log_det_pd(&aug)
}

/// Closed-form minimizer of one slack block of the dual Lagrangian,
/// `−λ log2 det(σ²I + Y) + ⟨Ω, Y⟩ + (c_Y/2)‖Y − Ȳ‖²` over `Y ⪰ 0`:
/// eigendecompose `M = c_Y Ȳ − Ω = U diag(d) Uᴴ`; per eigenvalue the scalar
/// stationarity is quadratic with the nonnegative root
/// `[−(σ²/2 − d/(2c_Y)) + √((σ²/2 + d/(2c_Y))² + λ/(c_Y ln2))]⁺`.
pub fn closed_form_slack_update(
    y_anchor: &CMat,
    omega: &CMat,
    lambda: f64,
    proximal_slack: f64,
    noise_power: f64,
) -> Result<CMat> {
    if !(proximal_slack > 0.0 && noise_power > 0.0 && lambda >= 0.0)
        || !(proximal_slack.is_finite() && noise_power.is_finite() && lambda.is_finite())
    {
        return Err(CoreError::InvalidInput(
            "slack update needs positive proximal weight and noise, nonnegative multiplier".into(),
        ));
    }
    let m = HermitianMatrix::symmetrized(&(y_anchor * c64(proximal_slack, 0.0) - omega));
    let eig = linalg::eig_hermitian(&m)?;
    let modes: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&d| {
            let shift = 0.5 * noise_power - d / (2.0 * proximal_slack);
            let radix = 0.5 * noise_power + d / (2.0 * proximal_slack);
            (-shift + (radix * radix + lambda / (proximal_slack * LN_2)).sqrt()).max(0.0)
        })
        .collect();
    Ok(linalg::psd_from_modes(&eig.eigenvectors, &modes).as_matrix().clone())
}

/// Slack-model constraint values: the rate certified by `Y_i` replaces the
/// exact rate term; interference is linearized exactly as in the anchored
/// reference, so the two models agree when `Y_i = I_i(Q)`.
fn g_breve_values(
    anchor: &Anchor<'_>,
    y: &[CMat],
    q: &[CMat],
    f: &[f64],
) -> Result<Vec<f64>> {
    let s = anchor.scenario();
    let mut out = vec![0.0; s.num_users()];
    for cell in 0..s.num_cells() {
        let lin = anchor.interference_linear_term(cell, q);
        let noise = s.noise_power(cell);
        for i in s.users_in_cell(cell) {
            out[i] = -slack_rate(&y[i], noise)? - anchor.r_minus(cell) - lin
                + latency_g_from_parts(s.task(i), 0.0, f[i]);
        }
    }
    Ok(out)
}

/// First-order matrix of `ΔQ_j` in the slack Lagrangian: the multiplier-
/// weighted interference linearizations plus the PSD-coupling terms
/// `Hᴴ Ω H` from every receiver that hears user `j`.
fn slack_q_linear(
    anchor: &Anchor<'_>,
    lambda: &[f64],
    omega: &[CMat],
    j: usize,
) -> CMat {
    let s = anchor.scenario();
    let n = s.num_users();
    let home = s.cell_of(j);
    let dim = s.tx_antennas(j);
    let mut lin = CMat::zeros(dim, dim);
    for m in 0..n {
        let cell = s.cell_of(m);
        if m == j || cell != home {
            let h = s.channel(j, cell);
            lin += h.adjoint() * &omega[m] * h;
        }
    }
    for cell in 0..s.num_cells() {
        if cell == home {
            continue;
        }
        let weight: f64 = s.users_in_cell(cell).map(|i| lambda[i]).sum();
        if weight != 0.0 {
            if let Some(pi) = anchor.pi_minus(cell, j) {
                lin += pi * c64(weight, 0.0);
            }
        }
    }
    linalg::symmetrize(&lin)
}

// ---------------------------------------------------------------------------
// Slack dual solver.

/// Solves the anchored subproblem under the slack reformulation by
/// multiplier ascent (`mode` picks subgradient or diagonal-Newton updates).
/// `y_anchor` centers the slack proximal terms. Returns the polished
/// solution, the dual trace, and the slack matrices plus warm-start
/// multipliers for the next outer iteration.
pub fn dual_slack_solve(
    anchor: &Anchor<'_>,
    cfg: &SurrogateConfig,
    y_anchor: &[CMat],
    mode: MultiplierUpdate,
    warm: Option<&SlackWarmStart>,
) -> Result<(SubproblemSolution, DualTrace, SlackStep)> {
    let out = dual_slack_attempt(anchor, cfg, y_anchor, mode, warm)?;
    if out.converged {
        Ok((out.solution, out.trace, out.step))
    } else {
        Err(CoreError::DualNonConvergence {
            residual: out.solution.residual,
            iters: out.solution.iters,
            best: Box::new(out.solution),
        })
    }
}

struct SlackAttempt {
    solution: SubproblemSolution,
    trace: DualTrace,
    step: SlackStep,
    converged: bool,
}

fn dual_slack_attempt(
    anchor: &Anchor<'_>,
    cfg: &SurrogateConfig,
    y_anchor: &[CMat],
    mode: MultiplierUpdate,
    warm: Option<&SlackWarmStart>,
) -> Result<SlackAttempt> {
    let s = anchor.scenario();
    let n = s.num_users();
    if y_anchor.len() != n {
        return Err(CoreError::DimensionMismatch("one slack matrix per user required".into()));
    }
    let f_t = s.cloud_budget();
    let lo = sca::share_floors(s)?;
    let msgs_per_iter = 2 * s.num_cells();
    let scale = anchor_constraint_scales(anchor);
    let c_y = cfg.proximal_slack;

    let anchor_q: Vec<CMat> =
        anchor.state().covariances.iter().map(|m| m.as_matrix().clone()).collect();
    let anchor_f = anchor.state().compute_rates.clone();
    let i_anchor: Vec<CMat> =
        (0..n).map(|i| signal_plus_interference(s, &anchor_q, i)).collect();
    let scale_y: Vec<f64> = i_anchor.iter().map(|m| 1.0 + fro_norm(m)).collect();
    let noise: Vec<f64> = (0..n).map(|i| s.noise_power(s.cell_of(i))).collect();

    let mut lambda: Vec<f64> = warm
        .map(|w| w.lambda.iter().map(|x| x.max(0.0)).collect())
        .unwrap_or_else(|| vec![0.0; n]);
    let mut lambda_f = warm.map(|w| w.lambda_budget.max(0.0)).unwrap_or(0.0);
    let mut omega: Vec<CMat> = match warm {
        Some(w) if w.omega.len() == n => w.omega.clone(),
        _ => (0..n)
            .map(|i| {
                let dim = s.rx_antennas(s.cell_of(i));
                CMat::zeros(dim, dim)
            })
            .collect(),
    };

    let mut beta_scale =
        cfg.dual_beta0.unwrap_or_else(|| 1.0 / (1.0 + anchor.energy().abs()));
    let mut damping = 1.0f64;
    let spg_opts =
        SpgOptions { max_iters: 800, grad_tol: cfg.inner_grad_tol, ..SpgOptions::default() };

    let mut q_hat = anchor_q.clone();
    let mut y_hat: Vec<CMat> = y_anchor.to_vec();
    let mut records = Vec::new();
    let mut rejected = 0usize;
    let mut accepted = 0usize;
    let mut iters = 0usize;
    let mut best_dual = f64::NEG_INFINITY;
    let mut best_mult = (lambda.clone(), lambda_f, omega.clone());
    let mut best_kkt = f64::INFINITY;
    let mut best_primal: Option<(Vec<CMat>, Vec<f64>, Vec<CMat>, Vec<f64>, f64, Vec<CMat>)> = None;
    let mut converged = false;

    for _ in 0..cfg.max_dual_iters {
        iters += 1;
        for i in 0..n {
            y_hat[i] = closed_form_slack_update(&y_anchor[i], &omega[i], lambda[i], c_y, noise[i])?;
        }
        for j in 0..n {
            let lin = slack_q_linear(anchor, &lambda, &omega, j);
            let next = solve_q_block(anchor, cfg, j, &q_hat[j], &lin, 0.0, &spg_opts)?;
            q_hat[j] = next;
        }
        let f_hat = f_blocks(anchor, cfg, &lo, &lambda, lambda_f)?;
        let i_hat: Vec<CMat> = (0..n).map(|i| signal_plus_interference(s, &q_hat, i)).collect();

        let gvals = g_breve_values(anchor, &y_hat, &q_hat, &f_hat)?;
        let budget_g = (f_hat.iter().sum::<f64>() - f_t) / f_t;
        let e_model = anchor.energy_value(cfg, &q_hat, &f_hat);
        let prox_y: f64 = y_hat
            .iter()
            .zip(y_anchor)
            .map(|(a, b)| {
                let d = a - b;
                inner_re(&d, &d)
            })
            .sum::<f64>()
            * 0.5
            * c_y;
        let pairing: f64 =
            (0..n).map(|i| inner_re(&omega[i], &(&y_hat[i] - &i_hat[i]))).sum();
        let dual_value = e_model
            + prox_y
            + lambda.iter().zip(&gvals).map(|(l, v)| l * v).sum::<f64>()
            + pairing
            + lambda_f * budget_g;

        let mut primal_viol = budget_g.max(0.0);
        let mut kkt = primal_viol.max(lambda_f.min((-budget_g).max(0.0)));
        let mut order_gaps = Vec::with_capacity(n);
        for i in 0..n {
            let v = gvals[i] / scale[i];
            primal_viol = primal_viol.max(v.max(0.0));
            kkt = kkt.max(v.max(0.0)).max(lambda[i].min((-v).max(0.0)));
            let diff = linalg::symmetrize(&(&y_hat[i] - &i_hat[i]));
            let top = linalg::eig_hermitian(&HermitianMatrix::symmetrized(&diff))?.eigenvalues[0];
            let order_viol = top.max(0.0) / scale_y[i];
            primal_viol = primal_viol.max(order_viol);
            let comp =
                inner_re(&omega[i], &diff).abs() / (scale_y[i] * (1.0 + fro_norm(&omega[i])));
            kkt = kkt.max(order_viol).max(comp);
            order_gaps.push(diff);
        }

        if kkt < best_kkt {
            best_kkt = kkt;
            best_primal =
                Some((q_hat.clone(), f_hat.clone(), y_hat.clone(), lambda.clone(), lambda_f, omega.clone()));
        }
        if kkt <= cfg.dual_tol {
            records.push(DualTraceRecord {
                iter: iters,
                dual_value,
                max_violation: primal_viol,
                messages_cumulative: msgs_per_iter * iters,
                rejected_steps: rejected,
            });
            converged = true;
            break;
        }
        if dual_value < best_dual - ASCENT_TOL_REL * (1.0 + best_dual.abs()) {
            lambda = best_mult.0.clone();
            lambda_f = best_mult.1;
            omega = best_mult.2.clone();
            beta_scale *= 0.5;
            damping *= 0.5;
            rejected += 1;
            continue;
        }
        if dual_value > best_dual {
            best_dual = dual_value;
            best_mult = (lambda.clone(), lambda_f, omega.clone());
        }
        records.push(DualTraceRecord {
            iter: iters,
            dual_value,
            max_violation: primal_viol,
            messages_cumulative: msgs_per_iter * iters,
            rejected_steps: rejected,
        });
        accepted += 1;

        match mode {
            MultiplierUpdate::Gradient => {
                let beta = beta_scale / (1.0 + accepted as f64);
                for i in 0..n {
                    lambda[i] = (lambda[i] + beta * gvals[i] / scale[i]).max(0.0);
                    let next = &omega[i] + &order_gaps[i] * c64(beta, 0.0);
                    omega[i] = linalg::project_psd(&HermitianMatrix::symmetrized(&next))
                        .as_matrix()
                        .clone();
                }
                lambda_f = (lambda_f + beta * budget_g).max(0.0);
            }
            MultiplierUpdate::Newton => {
                let mut next_lambda = lambda.clone();
                for i in 0..n {
                    let h = 1e-4 * (1.0 + lambda[i]);
                    let probe = |lam: f64| -> Result<f64> {
                        let y = closed_form_slack_update(
                            &y_anchor[i],
                            &omega[i],
                            lam,
                            c_y,
                            noise[i],
                        )?;
                        let fpart = if cfg.freeze_compute {
                            latency_g_from_parts(s.task(i), 0.0, anchor_f[i])
                        } else {
                            let fi = per_cell_f_minimizer(
                                s.task(i),
                                lam,
                                lambda_f / f_t,
                                anchor_f[i],
                                cfg.proximal_f[i],
                            )?
                            .clamp(lo[i], f_t);
                            latency_g_from_parts(s.task(i), 0.0, fi)
                        };
                        Ok(-slack_rate(&y, noise[i])? + fpart)
                    };
                    let lam_m = (lambda[i] - h).max(0.0);
                    let lam_p = lambda[i] + h;
                    let curv = (probe(lam_p)? - probe(lam_m)?) / (lam_p - lam_m);
                    next_lambda[i] = newton_multiplier_step(lambda[i], gvals[i], curv, damping);
                }
                if !cfg.freeze_compute {
                    let h = 1e-4 * (1.0 + lambda_f);
                    let probe = |lf: f64| -> Result<f64> {
                        let mut total = 0.0;
                        for i in 0..n {
                            total += per_cell_f_minimizer(
                                s.task(i),
                                lambda[i],
                                lf / f_t,
                                anchor_f[i],
                                cfg.proximal_f[i],
                            )?
                            .clamp(lo[i], f_t);
                        }
                        Ok((total - f_t) / f_t)
                    };
                    let lf_m = (lambda_f - h).max(0.0);
                    let lf_p = lambda_f + h;
                    let curv = (probe(lf_p)? - probe(lf_m)?) / (lf_p - lf_m);
                    lambda_f = newton_multiplier_step(lambda_f, budget_g, curv, damping);
                }
                for i in 0..n {
                    omega[i] = omega_newton_update(
                        &y_anchor[i],
                        &omega[i],
                        lambda[i],
                        c_y,
                        noise[i],
                        &i_hat[i],
                        damping,
                    )?;
                }
                lambda = next_lambda;
                damping = (damping * 1.5).min(1.0);
            }
        }
    }

    let (q_b, f_b, y_b, lam_b, lamf_b, om_b) =
        best_primal.expect("the dual loop ran at least once");
    let polished = match polish_slack(anchor, cfg, &lo, &q_b, &f_b, &y_b) {
        Ok(v) => v,
        Err(CoreError::PolishFailure { .. }) if !converged => {
            let vals = g_breve_values(anchor, &i_anchor, &anchor_q, &anchor_f)?;
            let e_model = anchor.energy_value(cfg, &anchor_q, &anchor_f);
            (anchor.state().clone(), i_anchor.clone(), vals, e_model)
        }
        Err(e) => return Err(e),
    };
    let (state, y_final, constraint_values, surrogate_value) = polished;
    let solution = SubproblemSolution {
        state,
        multipliers: lam_b.clone(),
        budget_multiplier: lamf_b,
        constraint_values,
        surrogate_value,
        residual: best_kkt,
        iters,
        stages: 1,
    };
    let trace = DualTrace {
        records,
        iters_total: iters,
        messages_total: msgs_per_iter * iters,
        rejected_total: rejected,
    };
    let step = SlackStep {
        y_hat: y_final,
        warm: SlackWarmStart { lambda: lam_b, lambda_budget: lamf_b, omega: om_b },
    };
    Ok(SlackAttempt { solution, trace, step, converged })
}

/// Per-eigendirection Newton step on one PSD multiplier: the subgradient
/// `Ŷ(Ω) − I` is eigendecomposed, curvature along each eigendirection is
/// probed through the closed-form slack response, and the stepped multiplier
/// is projected back onto the PSD cone.
fn omega_newton_update(
    y_anchor: &CMat,
    omega: &CMat,
    lambda: f64,
    c_y: f64,
    noise: f64,
    i_hat: &CMat,
    damping: f64,
) -> Result<CMat> {
    let y = closed_form_slack_update(y_anchor, omega, lambda, c_y, noise)?;
    let g = HermitianMatrix::symmetrized(&(y - i_hat));
    let eig = linalg::eig_hermitian(&g)?;
    let dim = g.dim();
    let mut delta = CMat::zeros(dim, dim);
    for k in 0..dim {
        let u = eig.eigenvectors.column(k).into_owned();
        let uu = &u * u.adjoint();
        let om_k = inner_re(&uu, omega);
        let h = 1e-4 * (1.0 + om_k.abs());
        let probe = |sign: f64| -> Result<f64> {
            let shifted = omega + &uu * c64(sign * h, 0.0);
            let y2 = closed_form_slack_update(y_anchor, &shifted, lambda, c_y, noise)?;
            Ok(inner_re(&uu, &(y2 - i_hat)))
        };
        let curv = (probe(1.0)? - probe(-1.0)?) / (2.0 * h);
        let denom = (-curv).max(CURVATURE_FLOOR);
        delta += uu * c64(damping * eig.eigenvalues[k] / denom, 0.0);
    }
    let next = HermitianMatrix::symmetrized(&(omega + delta));
    Ok(linalg::project_psd(&next).as_matrix().clone())
}

/// Slack-solver polish: project the shares, pull each slack matrix back
/// under its signal-plus-interference cap (clipping the eigenvalues of the
/// whitened ratio to `[0, 1]` through a pseudo-inverse square root), then
/// blend toward the anchor triple until the slack model is satisfied.
fn polish_slack(
    anchor: &Anchor<'_>,
    cfg: &SurrogateConfig,
    lo: &[f64],
    q_hat: &[CMat],
    f_hat: &[f64],
    y_hat: &[CMat],
) -> Result<(AllocationState, Vec<CMat>, Vec<f64>, f64)> {
    let s = anchor.scenario();
    let n = s.num_users();
    let tol = sca::CONSTRAINT_FEASIBILITY_TOL;
    let f_proj = if cfg.freeze_compute {
        f_hat.to_vec()
    } else {
        linalg::project_floor_capped(f_hat, lo, s.cloud_budget())
    };
    let e_raw = true_energy(s, q_hat);
    let mut q_f = q_hat.to_vec();
    let mut f_f = f_proj;
    let mut y_f: Vec<CMat> =
        (0..n).map(|i| repair_slack(s, q_hat, &y_hat[i], i)).collect::<Result<_>>()?;
    let mut vals = g_breve_values(anchor, &y_f, &q_f, &f_f)?;
    if vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max) > tol {
        let anchor_q = &anchor.state().covariances;
        let anchor_f = &anchor.state().compute_rates;
        let anchor_qm: Vec<CMat> = anchor_q.iter().map(|m| m.as_matrix().clone()).collect();
        let y_safe: Vec<CMat> =
            (0..n).map(|i| signal_plus_interference(s, &anchor_qm, i)).collect();
        let blend = |theta: f64| -> (Vec<CMat>, Vec<f64>, Vec<CMat>) {
            let q = (0..n)
                .map(|j| &q_f[j] * c64(1.0 - theta, 0.0) + anchor_q[j].as_matrix() * c64(theta, 0.0))
                .collect();
            let f = f_f
                .iter()
                .zip(anchor_f)
                .map(|(a, b)| (1.0 - theta) * a + theta * b)
                .collect();
            let y = (0..n)
                .map(|i| &y_f[i] * c64(1.0 - theta, 0.0) + &y_safe[i] * c64(theta, 0.0))
                .collect();
            (q, f, y)
        };
        let (q1, f1, y1) = blend(1.0);
        let v1 = g_breve_values(anchor, &y1, &q1, &f1)?;
        if v1.iter().cloned().fold(f64::NEG_INFINITY, f64::max) > tol {
            return Err(CoreError::Inconsistent(
                "anchor allocation violates its own slack model".into(),
            ));
        }
        let mut lo_t = 0.0;
        let mut hi_t = 1.0;
        let mut best = (q1, f1, y1, v1);
        for _ in 0..60 {
            let mid = 0.5 * (lo_t + hi_t);
            let (qm, fm, ym) = blend(mid);
            let vm = g_breve_values(anchor, &ym, &qm, &fm)?;
            if vm.iter().cloned().fold(f64::NEG_INFINITY, f64::max) <= tol {
                hi_t = mid;
                best = (qm, fm, ym, vm);
            } else {
                lo_t = mid;
            }
        }
        (q_f, f_f, y_f, vals) = best;
    }
    let e_fin = true_energy(s, &q_f);
    let perturbation = (e_fin - e_raw).abs() / (1.0 + e_raw.abs());
    if perturbation > POLISH_LIMIT {
        return Err(CoreError::PolishFailure { perturbation, limit: POLISH_LIMIT });
    }
    let surrogate_value = anchor.energy_value(cfg, &q_f, &f_f);
    let state = AllocationState::new(s, to_psd(&q_f), f_f)?;
    Ok((state, y_f, vals, surrogate_value))
}

/// Largest PSD matrix of the form `I^{1/2} clip(I^{−1/2} Y I^{−1/2}) I^{1/2}`
/// below both `Y`'s certified cap and the actual `I_i(Q)`; any slack mass
/// outside the range of `I_i(Q)` is dropped.
fn repair_slack(s: &NetworkScenario, q: &[CMat], y: &CMat, i: usize) -> Result<CMat> {
    let cap = signal_plus_interference(s, q, i);
    let eig = linalg::eig_hermitian(&HermitianMatrix::symmetrized(&cap))?;
    let top = eig.eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    let cut = top * linalg::EIG_ZERO_REL_TOL;
    let dim = cap.nrows();
    let mut sqrt = CMat::zeros(dim, dim);
    let mut inv_sqrt = CMat::zeros(dim, dim);
    for k in 0..dim {
        let d = eig.eigenvalues[k];
        if d > cut && d > 0.0 {
            let u = eig.eigenvectors.column(k).into_owned();
            let uu = &u * u.adjoint();
            sqrt += &uu * c64(d.sqrt(), 0.0);
            inv_sqrt += &uu * c64(1.0 / d.sqrt(), 0.0);
        }
    }
    let ratio = HermitianMatrix::symmetrized(&(&inv_sqrt * y * &inv_sqrt));
    let reig = linalg::eig_hermitian(&ratio)?;
    let clipped: Vec<f64> = reig.eigenvalues.iter().map(|d| d.clamp(0.0, 1.0)).collect();
    let mid = linalg::psd_from_modes(&reig.eigenvectors, &clipped);
    Ok(linalg::symmetrize(&(&sqrt * mid.as_matrix() * &sqrt)))
}
