//! Network scenario, tasks, and the physical-layer quantities built on them:
//! achievable rates, latencies, transmit energies, the latency constraint in
//! its solver-friendly form, and the cheap sufficient feasibility check used
//! to seed the optimizers.
//!
//! Conventions fixed here and relied on everywhere else:
//! - Users are indexed flat and cell-major: all users of cell 0 first, then
//!   cell 1, and so on. `cell_of(user)` recovers the owning cell.
//! - Rates are in bits (base-2 logs). Gradients elsewhere carry the explicit
//!   1/ln 2 conversion factor.
//! - Quantities that blow up under an infeasible allocation (rate 0, compute
//!   share at or below the pole w/T̃) evaluate to `+∞` rather than erroring,
//!   so line searches can step through them.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg::{
    self, c64, log_det_capacity, log_det_pd, mat_is_finite, CMat, HermitianMatrix, PsdMatrix,
};

/// One user's offloading job.
///
/// `input_size_product` is the task constant c = (input bits) × (seconds per
/// bit at unit rate): transmit time equals `c / rate`. `cpu_cycles` is the
/// server-side work w, so execution time is `w / f` for a cycle share f.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTask {
    pub input_size_product: f64,
    pub cpu_cycles: f64,
    pub deadline: f64,
    pub backhaul_delay: f64,
}

impl UserTask {
    /// Deadline left for transmit + execute after the fixed backhaul delay.
    pub fn effective_deadline(&self) -> f64 {
        self.deadline - self.backhaul_delay
    }

    /// Smallest cycle share that can meet the deadline even with instant
    /// transmission; the latency constraint has a pole there.
    pub fn compute_pole(&self) -> f64 {
        self.cpu_cycles / self.effective_deadline()
    }

    fn validate(&self, who: usize) -> Result<()> {
        let ok = self.input_size_product > 0.0
            && self.cpu_cycles > 0.0
            && self.deadline > 0.0
            && self.backhaul_delay >= 0.0
            && self.effective_deadline() > 0.0
            && [self.input_size_product, self.cpu_cycles, self.deadline, self.backhaul_delay]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(CoreError::InvalidInput(format!("task of user {who} has non-positive or non-finite parameters")))
        }
    }
}

/// Immutable description of the network: cells, users, channels, noise,
/// per-user power budgets, the shared cloud budget, and the tasks.
///
/// `channels[i][m]` is the uplink matrix from user `i` to the base station of
/// cell `m` (receive-antennas × transmit-antennas); the home link is
/// `channels[i][cell_of(i)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioDoc", into = "ScenarioDoc")]
pub struct NetworkScenario {
    users_per_cell: Vec<usize>,
    cell_of_user: Vec<usize>,
    channels: Vec<Vec<CMat>>,
    noise_power: Vec<f64>,
    power_budgets: Vec<f64>,
    cloud_budget: f64,
    tasks: Vec<UserTask>,
}

impl NetworkScenario {
    /// Validates dimensions and positivity. `channels` is indexed flat and
    /// cell-major (see module docs); every user must carry a matrix for every
    /// cell, all sharing that cell's receive dimension.
    pub fn new(
        users_per_cell: Vec<usize>,
        channels: Vec<Vec<CMat>>,
        noise_power: Vec<f64>,
        power_budgets: Vec<f64>,
        cloud_budget: f64,
        tasks: Vec<UserTask>,
    ) -> Result<Self> {
        let num_cells = users_per_cell.len();
        if num_cells == 0 {
            return Err(CoreError::InvalidInput("scenario needs at least one cell".into()));
        }
        let num_users: usize = users_per_cell.iter().sum();
        if num_users == 0 {
            return Err(CoreError::InvalidInput("scenario needs at least one user".into()));
        }
        if channels.len() != num_users || power_budgets.len() != num_users || tasks.len() != num_users {
            return Err(CoreError::DimensionMismatch(format!(
                "expected {num_users} users, got {} channel rows, {} budgets, {} tasks",
                channels.len(),
                power_budgets.len(),
                tasks.len()
            )));
        }
        if noise_power.len() != num_cells {
            return Err(CoreError::DimensionMismatch(format!(
                "expected {num_cells} noise powers, got {}",
                noise_power.len()
            )));
        }
        let mut cell_of_user = Vec::with_capacity(num_users);
        for (cell, &k) in users_per_cell.iter().enumerate() {
            cell_of_user.extend(std::iter::repeat(cell).take(k));
        }
        // Receive dimension of each cell comes from its first stored matrix.
        let mut n_r = vec![0usize; num_cells];
        for (i, per_cell) in channels.iter().enumerate() {
            if per_cell.len() != num_cells {
                return Err(CoreError::DimensionMismatch(format!(
                    "user {i} has {} channel matrices, expected one per cell ({num_cells})",
                    per_cell.len()
                )));
            }
            let n_t = per_cell[0].ncols();
            for (m, h) in per_cell.iter().enumerate() {
                if !mat_is_finite(h) {
                    return Err(CoreError::InvalidInput(format!("channel of user {i} to cell {m} has non-finite entries")));
                }
                if h.ncols() != n_t {
                    return Err(CoreError::DimensionMismatch(format!(
                        "user {i}: transmit dimension differs across cells ({} vs {n_t})",
                        h.ncols()
                    )));
                }
                if n_r[m] == 0 {
                    n_r[m] = h.nrows();
                } else if h.nrows() != n_r[m] {
                    return Err(CoreError::DimensionMismatch(format!(
                        "cell {m}: receive dimension {} of user {i} differs from {}",
                        h.nrows(),
                        n_r[m]
                    )));
                }
            }
        }
        for (m, &s) in noise_power.iter().enumerate() {
            if !(s > 0.0 && s.is_finite()) {
                return Err(CoreError::InvalidInput(format!("noise power of cell {m} must be positive, got {s}")));
            }
        }
        for (i, &p) in power_budgets.iter().enumerate() {
            if !(p > 0.0 && p.is_finite()) {
                return Err(CoreError::InvalidInput(format!("power budget of user {i} must be positive, got {p}")));
            }
        }
        if !(cloud_budget > 0.0 && cloud_budget.is_finite()) {
            return Err(CoreError::InvalidInput(format!("cloud budget must be positive, got {cloud_budget}")));
        }
        for (i, t) in tasks.iter().enumerate() {
            t.validate(i)?;
        }
        Ok(Self { users_per_cell, cell_of_user, channels, noise_power, power_budgets, cloud_budget, tasks })
    }

    /// Convenience constructor for a one-cell, one-user network.
    pub fn single_user(
        channel: CMat,
        noise_power: f64,
        power_budget: f64,
        cloud_budget: f64,
        task: UserTask,
    ) -> Result<Self> {
        Self::new(vec![1], vec![vec![channel]], vec![noise_power], vec![power_budget], cloud_budget, vec![task])
    }

    pub fn num_cells(&self) -> usize {
        self.users_per_cell.len()
    }

    pub fn num_users(&self) -> usize {
        self.cell_of_user.len()
    }

    pub fn users_per_cell(&self) -> &[usize] {
        &self.users_per_cell
    }

    pub fn cell_of(&self, user: usize) -> usize {
        self.cell_of_user[user]
    }

    /// Flat indices of the users homed in `cell`, in ascending order.
    pub fn users_in_cell(&self, cell: usize) -> impl Iterator<Item = usize> + '_ {
        let lo: usize = self.users_per_cell[..cell].iter().sum();
        lo..lo + self.users_per_cell[cell]
    }

    pub fn channel(&self, user: usize, cell: usize) -> &CMat {
        &self.channels[user][cell]
    }

    pub fn home_channel(&self, user: usize) -> &CMat {
        &self.channels[user][self.cell_of_user[user]]
    }

    pub fn noise_power(&self, cell: usize) -> f64 {
        self.noise_power[cell]
    }

    pub fn power_budget(&self, user: usize) -> f64 {
        self.power_budgets[user]
    }

    pub fn cloud_budget(&self) -> f64 {
        self.cloud_budget
    }

    pub fn task(&self, user: usize) -> &UserTask {
        &self.tasks[user]
    }

    pub fn tx_antennas(&self, user: usize) -> usize {
        self.channels[user][0].ncols()
    }

    pub fn rx_antennas(&self, cell: usize) -> usize {
        self.channels[0][cell].nrows()
    }

    /// Noise-plus-intercell-interference covariance seen by cell `n`:
    /// `σ² I + Σ_{j homed elsewhere} H_{j,n} Q_j H_{j,n}^H`. Always positive
    /// definite since σ² > 0.
    pub fn interference_covariance(&self, q: &[PsdMatrix], cell: usize) -> HermitianMatrix {
        let n_r = self.rx_antennas(cell);
        let mut r = CMat::identity(n_r, n_r) * c64(self.noise_power[cell], 0.0);
        for j in 0..self.num_users() {
            if self.cell_of_user[j] == cell {
                continue;
            }
            let h = &self.channels[j][cell];
            r += h * q[j].as_matrix() * h.adjoint();
        }
        HermitianMatrix::symmetrized(&r)
    }

    /// Achievable rate of `user` in bits:
    /// `log2 det(I + H^H R^{-1} H Q)` with R the interference covariance of
    /// the home cell. Evaluated as `log2 det(I + B Q B^H)`, `B = R^{-1/2} H`,
    /// which keeps the argument Hermitian PSD.
    pub fn user_rate(&self, q: &[PsdMatrix], user: usize) -> f64 {
        let cell = self.cell_of_user[user];
        let r_cov = self.interference_covariance(q, cell);
        let b = linalg::inv_sqrt_pd(&r_cov).expect("interference covariance is positive definite")
            * self.home_channel(user);
        let arg = HermitianMatrix::symmetrized(&(&b * q[user].as_matrix() * b.adjoint()));
        log_det_capacity(&linalg::project_psd(&arg))
    }

    /// Rates of all users.
    pub fn rates(&self, q: &[PsdMatrix]) -> Vec<f64> {
        (0..self.num_users()).map(|i| self.user_rate(q, i)).collect()
    }

    /// Difference-of-concave split of the rate:
    /// `r⁺ = log2 det(R + H Q H^H)` and `r⁻ = −log2 det(R)`, so that
    /// `r⁺ + r⁻ = user_rate`. Both terms are evaluated through plain
    /// positive-definite log-determinants, deliberately not reusing the
    /// capacity route of [`Self::user_rate`], so the identity is a real
    /// cross-check between two computations.
    pub fn rate_dc_split(&self, q: &[PsdMatrix], user: usize) -> (f64, f64) {
        let cell = self.cell_of_user[user];
        let r_cov = self.interference_covariance(q, cell);
        let h = self.home_channel(user);
        let augmented =
            HermitianMatrix::symmetrized(&(r_cov.as_matrix() + h * q[user].as_matrix() * h.adjoint()));
        let r_plus = log_det_pd(&augmented).expect("R + HQH^H is positive definite");
        let r_minus = -log_det_pd(&r_cov).expect("interference covariance is positive definite");
        (r_plus, r_minus)
    }

    /// Transmit, execute, and end-to-end delay of `user` under `state`.
    /// Zero rate or zero share yield infinite components.
    pub fn latencies(&self, state: &AllocationState, user: usize) -> Latencies {
        let t = &self.tasks[user];
        let r = self.user_rate(&state.covariances, user);
        let f = state.compute_rates[user];
        let transmit = if r > 0.0 { t.input_size_product / r } else { f64::INFINITY };
        let execute = if f > 0.0 { t.cpu_cycles / f } else { f64::INFINITY };
        Latencies { transmit, execute, total: transmit + execute + t.backhaul_delay }
    }

    /// Transmit energy of `user`: `tr(Q) · c / r`. Zero covariance costs
    /// nothing by convention; positive power at zero rate is `+∞`.
    pub fn user_energy(&self, q: &[PsdMatrix], user: usize) -> f64 {
        let trace = q[user].trace();
        if trace <= 0.0 {
            return 0.0;
        }
        let r = self.user_rate(q, user);
        if r > 0.0 {
            trace * self.tasks[user].input_size_product / r
        } else {
            f64::INFINITY
        }
    }

    /// Sum of [`Self::user_energy`] over all users.
    pub fn total_energy(&self, q: &[PsdMatrix]) -> f64 {
        (0..self.num_users()).map(|i| self.user_energy(q, i)).sum()
    }

    /// Latency constraint of `user` in the solver's difference-of-convex
    /// form: `g = −r⁺ − r⁻ + c f / (f T̃ − w)`, defined for `f > w/T̃` and
    /// `+∞` at or below that pole. `g ≤ 0` is equivalent to the plain time
    /// budget `c/r + w/f ≤ T̃`.
    pub fn latency_constraint_g(&self, state: &AllocationState, user: usize) -> f64 {
        let (r_plus, r_minus) = self.rate_dc_split(&state.covariances, user);
        latency_g_from_parts(&self.tasks[user], r_plus + r_minus, state.compute_rates[user])
    }

    /// Time-form slack `c/r + w/f − T̃` (`≤ 0` when the deadline is met);
    /// infinite at r = 0 or f = 0. Kept alongside the g-form as an
    /// independently computed equivalent for audits and tests.
    pub fn latency_slack_time(&self, state: &AllocationState, user: usize) -> f64 {
        let t = &self.tasks[user];
        let lat = self.latencies(state, user);
        lat.transmit + lat.execute - t.effective_deadline()
    }

    /// Sufficient feasibility test with an explicit covariance probe: every
    /// user must clear its transmit deadline at the probe rates, and the
    /// implied minimum cycle shares `w/(T̃ − c/r̄)` must fit the cloud budget.
    /// Passing yields those shares as a witness allocation; failing reports
    /// which condition broke. A failure only means this probe is not a
    /// witness, not that the problem is infeasible.
    pub fn multicell_feasibility(&self, probe: &[PsdMatrix]) -> FeasibilityReport {
        let n = self.num_users();
        let probe_rates: Vec<f64> = (0..n).map(|i| self.user_rate(probe, i)).collect();
        let mut witness = vec![0.0; n];
        let mut failing_users = Vec::new();
        let mut demand = 0.0f64;
        for i in 0..n {
            let t = &self.tasks[i];
            let slack = t.effective_deadline()
                - if probe_rates[i] > 0.0 { t.input_size_product / probe_rates[i] } else { f64::INFINITY };
            if slack > 0.0 {
                witness[i] = t.cpu_cycles / slack;
                demand += witness[i];
            } else {
                failing_users.push(i);
                demand = f64::INFINITY;
            }
        }
        let feasible = failing_users.is_empty() && demand <= self.cloud_budget;
        FeasibilityReport {
            feasible,
            probe_rates,
            compute_demand: demand,
            witness_compute: if feasible { Some(witness) } else { None },
            failing_users,
        }
    }
}

/// `g = −r⁺ − r⁻ + c f/(f T̃ − w)` from an already-computed rate.
pub(crate) fn latency_g_from_parts(task: &UserTask, rate: f64, f: f64) -> f64 {
    let ttilde = task.effective_deadline();
    let denom = f * ttilde - task.cpu_cycles;
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    -rate + task.input_size_product * f / denom
}

/// Delay components reported by [`NetworkScenario::latencies`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Latencies {
    pub transmit: f64,
    pub execute: f64,
    pub total: f64,
}

/// Joint radio/compute allocation: one transmit covariance and one cloud
/// cycle share per user.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationState {
    pub covariances: Vec<PsdMatrix>,
    pub compute_rates: Vec<f64>,
}

impl AllocationState {
    /// Validates dimensions, per-user power, nonnegative shares, and the
    /// cloud budget (with small slack for accumulated rounding).
    pub fn new(s: &NetworkScenario, covariances: Vec<PsdMatrix>, compute_rates: Vec<f64>) -> Result<Self> {
        let n = s.num_users();
        if covariances.len() != n || compute_rates.len() != n {
            return Err(CoreError::DimensionMismatch(format!(
                "expected {n} covariances and shares, got {} and {}",
                covariances.len(),
                compute_rates.len()
            )));
        }
        for (i, q) in covariances.iter().enumerate() {
            if q.dim() != s.tx_antennas(i) {
                return Err(CoreError::DimensionMismatch(format!(
                    "covariance of user {i} is {}x{0}, expected {1}x{1}",
                    q.dim(),
                    s.tx_antennas(i)
                )));
            }
            if q.trace() > s.power_budget(i) + 1e-9 {
                return Err(CoreError::InvalidInput(format!(
                    "covariance of user {i} exceeds its power budget: tr = {} > {}",
                    q.trace(),
                    s.power_budget(i)
                )));
            }
        }
        for (i, &f) in compute_rates.iter().enumerate() {
            if !(f >= 0.0 && f.is_finite()) {
                return Err(CoreError::InvalidInput(format!("compute share of user {i} must be finite and ≥ 0, got {f}")));
            }
        }
        let total: f64 = compute_rates.iter().sum();
        if total > s.cloud_budget() * (1.0 + 1e-6) {
            return Err(CoreError::InvalidInput(format!(
                "compute shares sum to {total}, exceeding the cloud budget {}",
                s.cloud_budget()
            )));
        }
        Ok(Self { covariances, compute_rates })
    }

    /// Zero transmit covariances and zero shares (always budget-feasible,
    /// never latency-feasible); useful as a neutral placeholder.
    pub fn zeros(s: &NetworkScenario) -> Self {
        Self {
            covariances: (0..s.num_users()).map(|i| PsdMatrix::zeros(s.tx_antennas(i))).collect(),
            compute_rates: vec![0.0; s.num_users()],
        }
    }
}

/// Outcome of [`NetworkScenario::multicell_feasibility`].
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    /// Probe passed both conditions; the problem is certainly feasible.
    pub feasible: bool,
    /// Rates achieved by the probe covariances.
    pub probe_rates: Vec<f64>,
    /// Total minimum cycle demand `Σ w/(T̃ − c/r̄)`; `+∞` if some user cannot
    /// even meet its transmit deadline at the probe rates.
    pub compute_demand: f64,
    /// Minimum cycle shares meeting every deadline at the probe rates;
    /// present exactly when `feasible`.
    pub witness_compute: Option<Vec<f64>>,
    /// Users whose transmit time alone already exceeds the deadline.
    pub failing_users: Vec<usize>,
}

// ---------------------------------------------------------------------------
// Serialization mirror: complex entries as [re, im] pairs, row-major.

#[derive(Serialize, Deserialize, Clone)]
struct MatrixDoc {
    rows: usize,
    cols: usize,
    /// Row-major [re, im] pairs.
    entries: Vec<[f64; 2]>,
}

impl MatrixDoc {
    fn from_mat(m: &CMat) -> Self {
        let mut entries = Vec::with_capacity(m.nrows() * m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                entries.push([m[(r, c)].re, m[(r, c)].im]);
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), entries }
    }

    fn to_mat(&self) -> std::result::Result<CMat, String> {
        if self.entries.len() != self.rows * self.cols {
            return Err(format!("matrix document claims {}x{} but holds {} entries", self.rows, self.cols, self.entries.len()));
        }
        Ok(CMat::from_fn(self.rows, self.cols, |r, c| {
            let [re, im] = self.entries[r * self.cols + c];
            c64(re, im)
        }))
    }
}

#[derive(Serialize, Deserialize, Clone)]
struct UserDoc {
    power_budget: f64,
    task: UserTask,
    /// One channel matrix per cell, cell order.
    channels: Vec<MatrixDoc>,
}

#[derive(Serialize, Deserialize, Clone)]
struct ScenarioDoc {
    users_per_cell: Vec<usize>,
    noise_power: Vec<f64>,
    cloud_budget: f64,
    /// Flat cell-major user order, matching in-memory indexing.
    users: Vec<UserDoc>,
}

impl From<NetworkScenario> for ScenarioDoc {
    fn from(s: NetworkScenario) -> Self {
        let users = (0..s.num_users())
            .map(|i| UserDoc {
                power_budget: s.power_budgets[i],
                task: s.tasks[i].clone(),
                channels: s.channels[i].iter().map(MatrixDoc::from_mat).collect(),
            })
            .collect();
        ScenarioDoc {
            users_per_cell: s.users_per_cell,
            noise_power: s.noise_power,
            cloud_budget: s.cloud_budget,
            users,
        }
    }
}

impl TryFrom<ScenarioDoc> for NetworkScenario {
    type Error = CoreError;

    fn try_from(doc: ScenarioDoc) -> Result<Self> {
        let mut channels = Vec::with_capacity(doc.users.len());
        let mut budgets = Vec::with_capacity(doc.users.len());
        let mut tasks = Vec::with_capacity(doc.users.len());
        for u in doc.users {
            let per_cell: std::result::Result<Vec<CMat>, String> = u.channels.iter().map(MatrixDoc::to_mat).collect();
            channels.push(per_cell.map_err(CoreError::InvalidInput)?);
            budgets.push(u.power_budget);
            tasks.push(u.task);
        }
        NetworkScenario::new(doc.users_per_cell, channels, doc.noise_power, budgets, doc.cloud_budget, tasks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::fro_norm;

    pub(crate) fn scalar_channel(v: f64) -> CMat {
        CMat::from_fn(1, 1, |_, _| c64(v, 0.0))
    }

    fn default_task() -> UserTask {
        UserTask { input_size_product: 0.05, cpu_cycles: 1e5, deadline: 0.1, backhaul_delay: 0.0 }
    }

    /// Two single-user cells with scalar channels: channels[user][cell].
    fn two_cell_scalar(direct: f64, cross: f64, sigma2: f64, task: UserTask, f_t: f64) -> NetworkScenario {
        NetworkScenario::new(
            vec![1, 1],
            vec![
                vec![scalar_channel(direct), scalar_channel(cross)],
                vec![scalar_channel(cross), scalar_channel(direct)],
            ],
            vec![sigma2, sigma2],
            vec![1.0, 1.0],
            f_t,
            vec![task.clone(), task],
        )
        .unwrap()
    }

    fn unit_q(n: usize) -> Vec<PsdMatrix> {
        (0..n).map(|_| PsdMatrix::from_real_diag(&[1.0]).unwrap()).collect()
    }

    #[test]
    fn interference_covariance_cases() {
        // Lone cell: empty sum leaves the noise floor.
        let s = NetworkScenario::single_user(scalar_channel(1.0), 1.0, 1.0, 2e7, default_task()).unwrap();
        let r = s.interference_covariance(&unit_q(1), 0);
        assert_eq!(r.as_matrix()[(0, 0)].re, 1.0);

        // Unit interferer over a unit cross channel adds one.
        let s2 = two_cell_scalar(1.0, 1.0, 1.0, default_task(), 2e7);
        let r = s2.interference_covariance(&unit_q(2), 0);
        assert!((r.as_matrix()[(0, 0)].re - 2.0).abs() < 1e-15);

        // Silent interferer contributes nothing.
        let q = vec![PsdMatrix::from_real_diag(&[1.0]).unwrap(), PsdMatrix::zeros(1)];
        let r = s2.interference_covariance(&q, 0);
        assert!((r.as_matrix()[(0, 0)].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn user_rate_cases() {
        let s = NetworkScenario::single_user(scalar_channel(1.0), 1.0, 1.0, 2e7, default_task()).unwrap();
        assert!((s.user_rate(&unit_q(1), 0) - 1.0).abs() < 1e-12);
        assert_eq!(s.user_rate(&[PsdMatrix::zeros(1)], 0), 0.0);

        // Unit interference halves the SINR: log2(1 + 1/2).
        let s2 = two_cell_scalar(1.0, 1.0, 1.0, default_task(), 2e7);
        assert!((s2.user_rate(&unit_q(2), 0) - 1.5f64.log2()).abs() < 1e-12);
        assert!((1.5f64.log2() - 0.584_962_500_721_156_2).abs() < 1e-15);
    }

    #[test]
    fn rate_dc_split_cases() {
        let s = NetworkScenario::single_user(scalar_channel(1.0), 1.0, 1.0, 2e7, default_task()).unwrap();
        let (plus, minus) = s.rate_dc_split(&unit_q(1), 0);
        assert!((plus - 1.0).abs() < 1e-12);
        assert!(minus.abs() < 1e-12);

        let s2 = two_cell_scalar(1.0, 1.0, 1.0, default_task(), 2e7);
        let (plus, minus) = s2.rate_dc_split(&unit_q(2), 0);
        assert!((plus - 3f64.log2()).abs() < 1e-12);
        assert!((minus + 1.0).abs() < 1e-12);
        let direct = s2.user_rate(&unit_q(2), 0);
        assert!((plus + minus - direct).abs() < 1e-9);
    }

    #[test]
    fn latency_components() {
        // Unit-rate scalar link, c = 2 → two seconds on air, 0.05 s on CPU.
        let task = UserTask { input_size_product: 2.0, cpu_cycles: 1e5, deadline: 3.0, backhaul_delay: 0.0 };
        let s = NetworkScenario::single_user(scalar_channel(1.0), 1.0, 1.0, 2e7, task).unwrap();
        let st = AllocationState::new(&s, unit_q(1), vec![2e6]).unwrap();
        let lat = s.latencies(&st, 0);
        assert!((lat.transmit - 2.0).abs() < 1e-12);
        assert!((lat.execute - 0.05).abs() < 1e-12);
        assert!((lat.total - 2.05).abs() < 1e-12);

        let st0 = AllocationState::new(&s, unit_q(1), vec![0.0]).unwrap();
        assert_eq!(s.latencies(&st0, 0).execute, f64::INFINITY);
    }

    #[test]
    fn energy_cases() {
        // Pure formula: tr·c/r.
        assert_eq!(0.5 * 1.0 / 0.5, 1.0);

        let task = UserTask { input_size_product: 1.0, cpu_cycles: 1e5, deadline: 2.0, backhaul_delay: 0.0 };
        let s = NetworkScenario::single_user(scalar_channel(1.0), 1.0, 1.0, 2e7, task).unwrap();
        assert!((s.user_energy(&unit_q(1), 0) - 1.0).abs() < 1e-12);
        assert_eq!(s.user_energy(&[PsdMatrix::zeros(1)], 0), 0.0);
    }

    #[test]
    fn total_energy_cases() {
        let task = UserTask { input_size_product: 1.0, cpu_cycles: 1e5, deadline: 2.0, backhaul_delay: 0.0 };
        let s = NetworkScenario::single_user(scalar_channel(1.0), 1.0, 1.0, 2e7, task.clone()).unwrap();
        assert_eq!(s.total_energy(&[PsdMatrix::zeros(1)]), 0.0);
        assert_eq!(s.total_energy(&unit_q(1)), s.user_energy(&unit_q(1), 0));

        // Decoupled cells (zero cross gain): energies add.
        let s2 = two_cell_scalar(1.0, 0.0, 1.0, task, 2e7);
        assert!((s2.total_energy(&unit_q(2)) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn latency_constraint_forms_agree() {
        let s = NetworkScenario::single_user(scalar_channel(1.0), 1.0, 1.0, 2e7, default_task()).unwrap();
        let st = AllocationState::new(&s, unit_q(1), vec![2e6]).unwrap();
        // r = 1, c = 0.05, w = 1e5, f = 2e6, T̃ = 0.1: both forms vanish.
        assert!(s.latency_constraint_g(&st, 0).abs() < 1e-12);
        assert!(s.latency_slack_time(&st, 0).abs() < 1e-12);

        // At the pole f = w/T̃ the g-form is +∞.
        let st_pole = AllocationState::new(&s, unit_q(1), vec![1e6]).unwrap();
        assert_eq!(s.latency_constraint_g(&st_pole, 0), f64::INFINITY);

        // c = 1 at unit rate busts a 0.1 s deadline by 0.95 s.
        let task = UserTask { input_size_product: 1.0, ..default_task() };
        let s =
            NetworkScenario::single_user(scalar_channel(1.0), 1.0, 1.0, 2e7, task).unwrap();
        let st = AllocationState::new(&s, unit_q(1), vec![2e6]).unwrap();
        assert!((s.latency_slack_time(&st, 0) - 0.95).abs() < 1e-12);
        assert!(s.latency_constraint_g(&st, 0) > 0.0);
    }

    #[test]
    fn feasibility_report_cases() {
        // Unit-rate user needs f = 1e5/(0.1 − 0.05) = 2e6 of the 2e7 budget.
        let s = NetworkScenario::single_user(scalar_channel(1.0), 1.0, 1.0, 2e7, default_task()).unwrap();
        let rep = s.multicell_feasibility(&unit_q(1));
        assert!(rep.feasible);
        let w = rep.witness_compute.unwrap();
        assert!((w[0] - 2e6).abs() < 1e-6);

        // Transmit time alone exceeding T̃ fails regardless of the cloud.
        let task = UserTask { input_size_product: 0.2, ..default_task() };
        let s = NetworkScenario::single_user(scalar_channel(1.0), 1.0, 1.0, 2e7, task).unwrap();
        let rep = s.multicell_feasibility(&unit_q(1));
        assert!(!rep.feasible);
        assert_eq!(rep.failing_users, vec![0]);
        assert_eq!(rep.compute_demand, f64::INFINITY);

        // Two isolated unit-rate users need 4e6 cycles; 3e6 is not enough.
        let s2 = two_cell_scalar(1.0, 0.0, 1.0, default_task(), 3e6);
        let rep = s2.multicell_feasibility(&unit_q(2));
        assert!(!rep.feasible);
        assert!((rep.compute_demand - 4e6).abs() < 1.0);
        assert!(rep.failing_users.is_empty());
    }

    #[test]
    fn allocation_state_validation() {
        let s = NetworkScenario::single_user(scalar_channel(1.0), 1.0, 1.0, 2e7, default_task()).unwrap();
        // Power budget enforced.
        let q = vec![PsdMatrix::from_real_diag(&[1.5]).unwrap()];
        assert!(AllocationState::new(&s, q, vec![0.0]).is_err());
        // Cloud budget enforced.
        assert!(AllocationState::new(&s, unit_q(1), vec![3e7]).is_err());
        // Negative share rejected.
        assert!(AllocationState::new(&s, unit_q(1), vec![-1.0]).is_err());
    }

    #[test]
    fn scenario_round_trips_through_json() {
        let h = CMat::from_fn(2, 2, |r, c| c64(0.1 + r as f64, 0.3 - c as f64));
        let s = NetworkScenario::new(
            vec![1, 1],
            vec![
                vec![h.clone(), h.map(|z| z * c64(0.5, 0.25))],
                vec![h.map(|z| z * c64(0.0, 1.0)), h.clone()],
            ],
            vec![1.0, 2.0],
            vec![1.0, 3.0],
            2e7,
            vec![default_task(), UserTask { cpu_cycles: 3e5, ..default_task() }],
        )
        .unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: NetworkScenario = serde_json::from_str(&json).unwrap();
        assert_eq!(back.users_per_cell, s.users_per_cell);
        assert_eq!(back.noise_power, s.noise_power);
        for i in 0..2 {
            for m in 0..2 {
                assert_eq!(fro_norm(&(back.channel(i, m) - s.channel(i, m))), 0.0);
            }
        }
        assert_eq!(back.tasks, s.tasks);
    }

    #[test]
    fn scenario_rejects_bad_dimensions() {
        // Receive dimensions must agree per cell.
        let res = NetworkScenario::new(
            vec![2],
            vec![vec![scalar_channel(1.0)], vec![CMat::zeros(2, 1)]],
            vec![1.0],
            vec![1.0, 1.0],
            1e7,
            vec![default_task(), default_task()],
        );
        assert!(matches!(res, Err(CoreError::DimensionMismatch(_))));
    }
}
