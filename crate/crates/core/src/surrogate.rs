//! Convex per-iteration models of the nonconvex energy objective and latency
//! constraints, built around a fixed anchor allocation.
//!
//! At each outer iteration the solver freezes the current allocation as an
//! *anchor*, replaces the true objective by a strongly convex upper model
//! whose gradient matches the true gradient at the anchor, and replaces each
//! latency constraint by a convex upper bound that is tight at the anchor.
//! Everything downstream (the centralized inner solver and both dual
//! decompositions) evaluates these models through [`Anchor`].

use crate::error::{CoreError, Result};
use crate::linalg::{
    self, c64, inner_re, trace_re, CMat, HermitianMatrix,
};
use crate::model::{latency_g_from_parts, AllocationState, NetworkScenario, UserTask};

use std::f64::consts::LN_2;

/// Tuning knobs shared by the outer loop, the centralized inner solver, and
/// the dual decompositions. Build with [`SurrogateConfig::for_scenario`] and
/// adjust fields as needed; [`SurrogateConfig::validate`] enforces the ranges
/// the convergence arguments rely on.
#[derive(Debug, Clone)]
pub struct SurrogateConfig {
    /// Per-user weight `τ_i` of the quadratic covariance proximal term.
    pub proximal_q: Vec<f64>,
    /// Per-user weight `c_{f,i}` of the quadratic cycle-share proximal term.
    pub proximal_f: Vec<f64>,
    /// Weight `c_Y` of the slack proximal term in the slack decomposition.
    pub proximal_slack: f64,
    /// Initial relaxation step `γ⁰ ∈ (0, 1]` of the outer loop.
    pub step_initial: f64,
    /// Decay rate `α` of the step rule `γ ← γ(1 − αγ)`; must lie in
    /// `(0, 1/γ⁰)` so the steps stay positive and diminish.
    pub step_decay: f64,
    /// Outer termination threshold on the change in total energy.
    pub energy_tol: f64,
    /// Hard cap on outer iterations.
    pub max_outer: usize,
    /// Projected-gradient residual target of the inner minimizer.
    pub inner_grad_tol: f64,
    /// Iteration cap per inner barrier stage.
    pub inner_max_iters: usize,
    /// Barrier continuation target: stages end once the barrier duality-gap
    /// bound drops below `inner_gap_rel · (1 + |objective|)`. The solver
    /// floors the effective target at 1% of [`energy_tol`](Self::energy_tol),
    /// since tighter subproblem certificates are invisible to the outer loop.
    pub inner_gap_rel: f64,
    /// KKT residual target of the dual loops.
    pub dual_tol: f64,
    /// Hard cap on dual iterations per subproblem.
    pub max_dual_iters: usize,
    /// Initial dual stepsize scale; `None` picks `1/(1 + |anchor energy|)`.
    pub dual_beta0: Option<f64>,
    /// Keep every cycle share pinned at its anchor value. Used by the
    /// radio-only baseline that allocates compute statically.
    pub freeze_compute: bool,
}

impl SurrogateConfig {
    /// Defaults sized to the scenario: proximal weights small against the
    /// energy scale (a full-budget move in either block costs ~1e-6·P, so the
    /// quadratic terms regularise without steering; anything much stiffer on
    /// the cycle shares visibly throttles per-round compute moves and stalls
    /// the outer loop), unit initial step with slow decay, and inner
    /// tolerances tight enough for the outer stationarity targets.
    pub fn for_scenario(s: &NetworkScenario) -> Self {
        let f_t = s.cloud_budget();
        Self {
            proximal_q: (0..s.num_users()).map(|i| 1e-6 * s.power_budget(i)).collect(),
            proximal_f: (0..s.num_users()).map(|i| 1e-6 * s.power_budget(i) / (f_t * f_t)).collect(),
            proximal_slack: 1e-2,
            step_initial: 1.0,
            step_decay: 1e-4,
            energy_tol: 1e-3,
            max_outer: 500,
            inner_grad_tol: 1e-8,
            inner_max_iters: 4000,
            inner_gap_rel: 1e-9,
            dual_tol: 1e-6,
            max_dual_iters: 3000,
            dual_beta0: None,
            freeze_compute: false,
        }
    }

    /// Checks the ranges required by the convergence arguments: positive
    /// proximal weights (zero covariance weights are tolerated only when
    /// every home channel has full column rank, which already makes the
    /// energy model strictly convex), `γ⁰ ∈ (0, 1]`, `α ∈ (0, 1/γ⁰)`, and
    /// positive tolerances and iteration caps.
    pub fn validate(&self, s: &NetworkScenario) -> Result<()> {
        let n = s.num_users();
        if self.proximal_q.len() != n || self.proximal_f.len() != n {
            return Err(CoreError::DimensionMismatch(format!(
                "expected {n} proximal weights per block, got {} and {}",
                self.proximal_q.len(),
                self.proximal_f.len()
            )));
        }
        for (i, (&tq, &tf)) in self.proximal_q.iter().zip(&self.proximal_f).enumerate() {
            if !(tq >= 0.0 && tf >= 0.0 && tq.is_finite() && tf.is_finite()) {
                return Err(CoreError::InvalidInput(format!(
                    "proximal weights of user {i} must be finite and ≥ 0, got τ = {tq}, c_f = {tf}"
                )));
            }
            if tq == 0.0 || tf == 0.0 {
                let h = s.home_channel(i);
                let gram = HermitianMatrix::symmetrized(&(h.adjoint() * h));
                let eig = linalg::eig_hermitian(&gram)?;
                if eig.rank() < s.tx_antennas(i) {
                    return Err(CoreError::InvalidInput(format!(
                        "proximal weights of user {i} may be zero only with a full-column-rank home channel"
                    )));
                }
            }
        }
        if !(self.proximal_slack > 0.0 && self.proximal_slack.is_finite()) {
            return Err(CoreError::InvalidInput(format!(
                "slack proximal weight must be positive, got {}",
                self.proximal_slack
            )));
        }
        if !(self.step_initial > 0.0 && self.step_initial <= 1.0) {
            return Err(CoreError::InvalidInput(format!(
                "initial step must lie in (0, 1], got {}",
                self.step_initial
            )));
        }
        if !(self.step_decay > 0.0 && self.step_decay < 1.0 / self.step_initial) {
            return Err(CoreError::InvalidInput(format!(
                "step decay must lie in (0, 1/γ⁰) = (0, {}), got {}",
                1.0 / self.step_initial,
                self.step_decay
            )));
        }
        for (name, v) in [
            ("energy tolerance", self.energy_tol),
            ("inner gradient tolerance", self.inner_grad_tol),
            ("inner gap target", self.inner_gap_rel),
            ("dual tolerance", self.dual_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CoreError::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_outer == 0 || self.inner_max_iters == 0 || self.max_dual_iters == 0 {
            return Err(CoreError::InvalidInput("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

/// Conjugate gradient of user `term`'s transmit energy with respect to the
/// covariance of user `wrt`, at the allocation `q`. The convention is
/// first-order: `E(Q + Δ) ≈ E(Q) + ⟨G, Δ⟩` with `⟨A, B⟩ = Re tr(AᴴB)`.
///
/// Users homed in the same cell do not interfere (in-cell channels are kept
/// orthogonal), so the gradient is zero there; across cells it is
/// `[c · tr(Q_term) / (ln2 · r²)] · Hᴴ (R⁻¹ − S⁻¹) H` with `R` the
/// interference covariance of `term`'s cell, `S = R + H_own Q_term H_ownᴴ`,
/// and `H` the cross channel of `wrt` into that cell — a PSD matrix, since
/// more interference can only cost energy. Requires `term` to have a
/// positive rate.
pub fn energy_conj_gradient(
    s: &NetworkScenario,
    q: &[crate::linalg::PsdMatrix],
    wrt: usize,
    term: usize,
) -> Result<HermitianMatrix> {
    let cell = s.cell_of(term);
    if s.cell_of(wrt) == cell {
        return Ok(HermitianMatrix::zeros(s.tx_antennas(wrt)));
    }
    let h_cross = s.channel(wrt, cell);
    let r_cov = s.interference_covariance(q, cell);
    let r_inv = linalg::inv_pd(&r_cov)?;
    let h_own = s.home_channel(term);
    let s_mat =
        HermitianMatrix::symmetrized(&(r_cov.as_matrix() + h_own * q[term].as_matrix() * h_own.adjoint()));
    let s_inv = linalg::inv_pd(&s_mat)?;
    let rate = s.user_rate(q, term);
    if !(rate > 0.0) {
        return Err(CoreError::InvalidInput(format!(
            "energy gradient undefined: user {term} has zero rate at the given allocation"
        )));
    }
    let task = s.task(term);
    let pre = task.input_size_product * q[term].trace() / (LN_2 * rate * rate);
    let m = h_cross.adjoint() * (&r_inv - &s_inv) * h_cross * c64(pre, 0.0);
    Ok(HermitianMatrix::symmetrized(&m))
}

/// Frozen allocation together with every anchor-dependent quantity the convex
/// models need: per-cell interference covariances and their inverses, rates,
/// energies, whitened home channels, and the two families of linearization
/// matrices (interference penalties of the constraint split, and cross-cell
/// energy gradients).
///
/// Requires every user to have a positive rate at the anchor; the energy
/// model divides by anchor rates.
pub struct Anchor<'a> {
    scenario: &'a NetworkScenario,
    state: AllocationState,
    rates: Vec<f64>,
    energies: Vec<f64>,
    energy: f64,
    /// Per cell, the concave rate part `r⁻ = −log2 det R̄` at the anchor.
    r_minus: Vec<f64>,
    /// Per user, the whitened home channel `B = R̄^{-1/2} H`.
    b: Vec<CMat>,
    /// Per user, `(R̄ + H Q̄ Hᴴ)⁻¹` in the home cell.
    s_inv: Vec<CMat>,
    /// `pi_minus[n][j]`: gradient of `r⁻_n` w.r.t. `Q_j` at the anchor,
    /// `−(1/ln2) Hᴴ R̄_n⁻¹ H`; `None` for users homed in cell `n`.
    pi_minus: Vec<Vec<Option<CMat>>>,
    /// Per user `i`, the summed cross-cell energy gradient
    /// `Σ_{j homed elsewhere} ∇_{Q_i} E_j` at the anchor.
    pi_energy: Vec<CMat>,
}

impl<'a> Anchor<'a> {
    pub fn new(scenario: &'a NetworkScenario, state: &AllocationState) -> Result<Anchor<'a>> {
        let n_users = scenario.num_users();
        let n_cells = scenario.num_cells();
        if state.covariances.len() != n_users || state.compute_rates.len() != n_users {
            return Err(CoreError::DimensionMismatch("allocation does not match scenario".into()));
        }
        let q = &state.covariances;

        let mut r_minus = Vec::with_capacity(n_cells);
        let mut r_inv = Vec::with_capacity(n_cells);
        let mut r_inv_sqrt = Vec::with_capacity(n_cells);
        for cell in 0..n_cells {
            let r_cov = scenario.interference_covariance(q, cell);
            r_minus.push(-linalg::log_det_pd(&r_cov)?);
            r_inv.push(linalg::inv_pd(&r_cov)?);
            r_inv_sqrt.push(linalg::inv_sqrt_pd(&r_cov)?);
        }

        let mut rates = Vec::with_capacity(n_users);
        let mut energies = Vec::with_capacity(n_users);
        let mut b = Vec::with_capacity(n_users);
        let mut s_inv = Vec::with_capacity(n_users);
        for i in 0..n_users {
            let cell = scenario.cell_of(i);
            let h = scenario.home_channel(i);
            let bi = &r_inv_sqrt[cell] * h;
            let arg = HermitianMatrix::symmetrized(&(&bi * q[i].as_matrix() * bi.adjoint()));
            let rate = linalg::log_det_capacity_clipped(&arg);
            if !(rate > 0.0) {
                return Err(CoreError::InvalidInput(format!(
                    "anchor rate of user {i} is zero; the energy model needs positive anchor rates"
                )));
            }
            let s_full = HermitianMatrix::symmetrized(
                &(scenario.interference_covariance(q, cell).as_matrix()
                    + h * q[i].as_matrix() * h.adjoint()),
            );
            rates.push(rate);
            energies.push(q[i].trace() * scenario.task(i).input_size_product / rate);
            b.push(bi);
            s_inv.push(linalg::inv_pd(&s_full)?);
        }

        let mut pi_minus: Vec<Vec<Option<CMat>>> = Vec::with_capacity(n_cells);
        for cell in 0..n_cells {
            let mut row = Vec::with_capacity(n_users);
            for j in 0..n_users {
                if scenario.cell_of(j) == cell {
                    row.push(None);
                } else {
                    let h = scenario.channel(j, cell);
                    let m = h.adjoint() * &r_inv[cell] * h * c64(-1.0 / LN_2, 0.0);
                    row.push(Some(linalg::symmetrize(&m)));
                }
            }
            pi_minus.push(row);
        }

        let mut pi_energy = Vec::with_capacity(n_users);
        for i in 0..n_users {
            let mut acc = CMat::zeros(scenario.tx_antennas(i), scenario.tx_antennas(i));
            let home = scenario.cell_of(i);
            for j in 0..n_users {
                let cell = scenario.cell_of(j);
                if cell == home {
                    continue;
                }
                let pre = scenario.task(j).input_size_product * q[j].trace()
                    / (LN_2 * rates[j] * rates[j]);
                let h = scenario.channel(i, cell);
                acc += h.adjoint() * (&r_inv[cell] - &s_inv[j]) * h * c64(pre, 0.0);
            }
            pi_energy.push(linalg::symmetrize(&acc));
        }

        let energy = energies.iter().sum();
        Ok(Anchor {
            scenario,
            state: state.clone(),
            rates,
            energies,
            energy,
            r_minus,
            b,
            s_inv,
            pi_minus,
            pi_energy,
        })
    }

    pub fn scenario(&self) -> &'a NetworkScenario {
        self.scenario
    }

    pub fn state(&self) -> &AllocationState {
        &self.state
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Total transmit energy at the anchor.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub(crate) fn r_minus(&self, cell: usize) -> f64 {
        self.r_minus[cell]
    }

    pub(crate) fn s_inv(&self, user: usize) -> &CMat {
        &self.s_inv[user]
    }

    pub(crate) fn pi_minus(&self, cell: usize, user: usize) -> Option<&CMat> {
        self.pi_minus[cell][user].as_ref()
    }

    #[cfg(test)]
    pub(crate) fn pi_energy(&self, user: usize) -> &CMat {
        &self.pi_energy[user]
    }

    /// Rate of user `i` with candidate covariance `q_i` but interference
    /// frozen at the anchor: `log2 det(I + B q_i Bᴴ)`.
    pub fn rate_anchored(&self, i: usize, q_i: &CMat) -> f64 {
        let arg = HermitianMatrix::symmetrized(&(&self.b[i] * q_i * self.b[i].adjoint()));
        linalg::log_det_capacity_clipped(&arg)
    }

    /// Gradient of [`Self::rate_anchored`] at `q_i`:
    /// `(1/ln2) Bᴴ (I + B q Bᴴ)⁻¹ B`.
    fn rate_anchored_grad(&self, i: usize, q_i: &CMat) -> Result<CMat> {
        let bi = &self.b[i];
        let dim = bi.nrows();
        let inner = HermitianMatrix::symmetrized(&(CMat::identity(dim, dim) + bi * q_i * bi.adjoint()));
        let inv = linalg::inv_pd(&inner)?;
        Ok(linalg::symmetrize(&(bi.adjoint() * inv * bi * c64(1.0 / LN_2, 0.0))))
    }

    /// One user's share of the convex energy model:
    /// `c·tr(q)/r̄ + c·tr(Q̄)/r(q) + ⟨Π, q − Q̄⟩ + τ‖q − Q̄‖² + (c_f/2)(f − f̄)²`
    /// with `r̄` the anchor rate, `r(q)` the anchored-interference rate, and
    /// `Π` the cross-cell energy gradient. `+∞` when the anchored rate hits
    /// zero while the anchor transmits.
    pub fn energy_term(&self, cfg: &SurrogateConfig, i: usize, q_i: &CMat, f_i: f64) -> f64 {
        let task = self.scenario.task(i);
        let c = task.input_size_product;
        let mut val = c * trace_re(q_i) / self.rates[i];
        let tr_anchor = self.state.covariances[i].trace();
        if tr_anchor > 0.0 {
            let rbar = self.rate_anchored(i, q_i);
            if !(rbar > 0.0) {
                return f64::INFINITY;
            }
            val += c * tr_anchor / rbar;
        }
        let dq = q_i - self.state.covariances[i].as_matrix();
        val += inner_re(&self.pi_energy[i], &dq);
        val += cfg.proximal_q[i] * inner_re(&dq, &dq);
        let df = f_i - self.state.compute_rates[i];
        val += 0.5 * cfg.proximal_f[i] * df * df;
        val
    }

    /// Covariance gradient of [`Self::energy_term`].
    pub fn energy_term_grad_q(&self, cfg: &SurrogateConfig, i: usize, q_i: &CMat) -> Result<CMat> {
        let task = self.scenario.task(i);
        let c = task.input_size_product;
        let dim = q_i.nrows();
        let mut g = CMat::identity(dim, dim) * c64(c / self.rates[i], 0.0);
        let tr_anchor = self.state.covariances[i].trace();
        if tr_anchor > 0.0 {
            let rbar = self.rate_anchored(i, q_i);
            if !(rbar > 0.0) {
                return Err(CoreError::InvalidInput(format!(
                    "energy model gradient undefined at zero anchored rate (user {i})"
                )));
            }
            let grad_rate = self.rate_anchored_grad(i, q_i)?;
            g -= grad_rate * c64(c * tr_anchor / (rbar * rbar), 0.0);
        }
        g += &self.pi_energy[i];
        let dq = q_i - self.state.covariances[i].as_matrix();
        g += dq * c64(2.0 * cfg.proximal_q[i], 0.0);
        Ok(linalg::symmetrize(&g))
    }

    /// Cycle-share derivative of [`Self::energy_term`].
    pub fn energy_term_grad_f(&self, cfg: &SurrogateConfig, i: usize, f_i: f64) -> f64 {
        cfg.proximal_f[i] * (f_i - self.state.compute_rates[i])
    }

    /// Full convex energy model `Σ_i` [`Self::energy_term`].
    pub fn energy_value(&self, cfg: &SurrogateConfig, q: &[CMat], f: &[f64]) -> f64 {
        (0..self.scenario.num_users()).map(|i| self.energy_term(cfg, i, &q[i], f[i])).sum()
    }

    /// Gradient blocks of [`Self::energy_value`].
    pub fn energy_gradient(
        &self,
        cfg: &SurrogateConfig,
        q: &[CMat],
        f: &[f64],
    ) -> Result<(Vec<CMat>, Vec<f64>)> {
        let n = self.scenario.num_users();
        let mut gq = Vec::with_capacity(n);
        let mut gf = Vec::with_capacity(n);
        for i in 0..n {
            gq.push(self.energy_term_grad_q(cfg, i, &q[i])?);
            gf.push(self.energy_term_grad_f(cfg, i, f[i]));
        }
        Ok((gq, gf))
    }

    /// Anchor linearization of the interference term of cell `cell`:
    /// `Σ_{j homed elsewhere} ⟨Π⁻_{j,cell}, q_j − Q̄_j⟩`.
    pub fn interference_linear_term(&self, cell: usize, q: &[CMat]) -> f64 {
        let mut acc = 0.0;
        for (j, pi) in self.pi_minus[cell].iter().enumerate() {
            if let Some(pi) = pi {
                let dq = &q[j] - self.state.covariances[j].as_matrix();
                acc += inner_re(pi, &dq);
            }
        }
        acc
    }

    /// Convex upper models of every latency constraint at the candidate
    /// `(q, f)`: the convex rate part keeps its exact dependence on all
    /// covariances, the concave interference part is linearized at the
    /// anchor. Entries are `+∞` on or below the cycle-share pole.
    pub fn g_tilde(&self, q: &[CMat], f: &[f64]) -> Result<Vec<f64>> {
        let s = self.scenario;
        let mut out = vec![0.0; s.num_users()];
        for cell in 0..s.num_cells() {
            let r_cand = self.candidate_interference(cell, q);
            let lin = self.interference_linear_term(cell, q);
            for i in s.users_in_cell(cell) {
                let h = s.home_channel(i);
                let aug = HermitianMatrix::symmetrized(&(&r_cand + h * &q[i] * h.adjoint()));
                let r_plus = linalg::log_det_pd(&aug)?;
                out[i] = -r_plus - self.r_minus[cell] - lin
                    + latency_g_from_parts(s.task(i), 0.0, f[i]);
            }
        }
        Ok(out)
    }

    /// Gradient blocks of the weighted sum `Σ_i mult_i · g̃_i`; the workhorse
    /// of the barrier inner solver, which needs exactly this combination.
    /// Weights must be finite; entries of `f` must lie above their poles.
    pub fn g_tilde_weighted_grad(
        &self,
        q: &[CMat],
        f: &[f64],
        mult: &[f64],
    ) -> Result<(Vec<CMat>, Vec<f64>)> {
        let s = self.scenario;
        let n = s.num_users();
        let mut gq: Vec<CMat> =
            (0..n).map(|j| CMat::zeros(s.tx_antennas(j), s.tx_antennas(j))).collect();
        let mut gf = vec![0.0; n];
        for cell in 0..s.num_cells() {
            let r_cand = self.candidate_interference(cell, q);
            let dim = r_cand.nrows();
            let mut weighted_s_inv = CMat::zeros(dim, dim);
            let mut weight_sum = 0.0;
            for i in s.users_in_cell(cell) {
                let h = s.home_channel(i);
                let aug = HermitianMatrix::symmetrized(&(&r_cand + h * &q[i] * h.adjoint()));
                let s_inv = linalg::inv_pd(&aug)?;
                gq[i] += h.adjoint() * &s_inv * h * c64(-mult[i] / LN_2, 0.0);
                gf[i] += mult[i] * pole_term_df(s.task(i), f[i]);
                weighted_s_inv += s_inv * c64(mult[i], 0.0);
                weight_sum += mult[i];
            }
            for j in 0..n {
                if s.cell_of(j) == cell {
                    continue;
                }
                let h = s.channel(j, cell);
                let mut g = h.adjoint() * &weighted_s_inv * h * c64(-1.0 / LN_2, 0.0);
                if let Some(pi) = &self.pi_minus[cell][j] {
                    g -= pi * c64(weight_sum, 0.0);
                }
                gq[j] += g;
            }
        }
        for g in &mut gq {
            *g = linalg::symmetrize(g);
        }
        Ok((gq, gf))
    }

    /// Interference covariance of `cell` at candidate covariances.
    fn candidate_interference(&self, cell: usize, q: &[CMat]) -> CMat {
        let s = self.scenario;
        let dim = s.rx_antennas(cell);
        let mut r = CMat::identity(dim, dim) * c64(s.noise_power(cell), 0.0);
        for j in 0..s.num_users() {
            if s.cell_of(j) == cell {
                continue;
            }
            let h = s.channel(j, cell);
            r += h * &q[j] * h.adjoint();
        }
        r
    }
}

/// Derivative of the cycle-share pole term `c f/(f T̃ − w)` w.r.t. `f`:
/// `−c w/(f T̃ − w)²`. Finite only above the pole.
pub(crate) fn pole_term_df(task: &UserTask, f: f64) -> f64 {
    let denom = f * task.effective_deadline() - task.cpu_cycles;
    debug_assert!(denom > 0.0, "pole derivative requested at or below the pole");
    -task.input_size_product * task.cpu_cycles / (denom * denom)
}
