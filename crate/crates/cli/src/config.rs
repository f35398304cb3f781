//! Experiment configuration: a strict TOML document. Unknown keys are
//! rejected so a typo cannot silently fall back to a default.

use anyhow::{bail, Context, Result};
use mecsolve_core::SurrogateConfig;
use serde::Deserialize;
use std::path::Path;

/// Scenario, task, and driver parameters with the reference-network
/// defaults: two cells of four 2×2 users at 10 dB SNR with cross-cell
/// links 15 dB below the home links, unit power, a 2·10⁷ cycles/s cloud,
/// 10⁵-cycle tasks due in 0.1 s.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Number of cells, one base station each.
    pub cells: usize,
    /// Active users per cell (same count in every cell).
    pub users_per_cell: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    /// Target per-user SNR `P·E‖H‖² / (n_R σ²)` of the home links, in dB.
    pub snr_db: f64,
    /// Cross-cell channel strength relative to home links, in dB;
    /// `-inf` switches interference off entirely.
    pub interference_gain_db: f64,
    /// Per-user transmit power budget (watts).
    pub power_budget: f64,
    /// Receiver noise power σ² (watts), identical in every cell.
    pub noise_power: f64,
    /// Cloud computational budget f_T (CPU cycles/second).
    pub cloud_budget: f64,
    /// Per-task deadline T (seconds).
    pub deadline: f64,
    /// Round-trip backhaul delay subtracted from the deadline (seconds).
    pub backhaul_delay: f64,
    /// CPU cycles w a task needs.
    pub cpu_cycles: f64,
    /// Cycles-per-bit ratio η = w/b; fixes the bit count b = w/η unless
    /// `bits` is given explicitly.
    pub eta: f64,
    /// Explicit bit count b; overrides `eta` when set.
    pub bits: Option<f64>,
    /// Seconds of transmit time one bit costs at unit spectral efficiency;
    /// the task's rate constant is c = b · bit_time.
    pub bit_time: f64,
    /// RNG seed; realization k draws from stream k of this seed.
    pub seed: u64,
    pub num_realizations: usize,
    /// Default subproblem method for `solve` when --method is not given.
    pub method: String,
    /// Output directory for `solve` / `single-user` artifacts
    /// (`experiment` requires an explicit --out).
    pub out_dir: String,

    /// η grid of the sweep experiment; default 10 log-spaced points on
    /// [10, 10⁴].
    pub eta_grid: Option<Vec<f64>>,
    /// Deadline grid of the convergence experiment.
    pub deadline_grid: Vec<f64>,
    /// Receive-antenna grid of the convergence experiment.
    pub rx_antenna_grid: Vec<usize>,
    /// η used by the convergence experiment (lighter bit loads keep the
    /// tightest deadline feasible).
    pub convergence_eta: f64,
    /// Random feasible initializations in the robustness study.
    pub robustness_inits: usize,

    /// Per-user power budget of the distributed comparison.
    pub distributed_power_budget: f64,
    /// Termination tolerance δ of the distributed comparison.
    pub distributed_delta: f64,
    /// Relaxation decay α of the distributed comparison.
    pub distributed_step_decay: f64,
    pub distributed_realizations: usize,

    pub solver: SolverOverrides,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            cells: 2,
            users_per_cell: 4,
            tx_antennas: 2,
            rx_antennas: 2,
            snr_db: 10.0,
            interference_gain_db: -15.0,
            power_budget: 1.0,
            noise_power: 1.0,
            cloud_budget: 2e7,
            deadline: 0.1,
            backhaul_delay: 0.0,
            cpu_cycles: 1e5,
            eta: 1e3,
            bits: None,
            bit_time: 1e-3,
            seed: 1,
            num_realizations: 100,
            method: "centralized".into(),
            out_dir: "out".into(),
            eta_grid: None,
            deadline_grid: vec![0.05, 0.1, 0.2],
            rx_antenna_grid: vec![2, 4],
            convergence_eta: 1e4,
            robustness_inits: 20,
            distributed_power_budget: 1000.0,
            distributed_delta: 1e-2,
            distributed_step_decay: 1e-5,
            distributed_realizations: 20,
            solver: SolverOverrides::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: Self = toml::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells == 0 || self.users_per_cell == 0 {
            bail!("cells and users_per_cell must be positive");
        }
        if self.tx_antennas == 0 || self.rx_antennas == 0 {
            bail!("antenna counts must be positive");
        }
        for (v, name) in [
            (self.power_budget, "power_budget"),
            (self.noise_power, "noise_power"),
            (self.cloud_budget, "cloud_budget"),
            (self.deadline, "deadline"),
            (self.cpu_cycles, "cpu_cycles"),
            (self.eta, "eta"),
            (self.bit_time, "bit_time"),
            (self.convergence_eta, "convergence_eta"),
            (self.distributed_power_budget, "distributed_power_budget"),
            (self.distributed_delta, "distributed_delta"),
            (self.distributed_step_decay, "distributed_step_decay"),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bail!("{name} must be positive and finite, got {v}");
            }
        }
        if let Some(b) = self.bits {
            if !(b > 0.0 && b.is_finite()) {
                bail!("bits must be positive and finite, got {b}");
            }
        }
        if !self.snr_db.is_finite() {
            bail!("snr_db must be finite, got {}", self.snr_db);
        }
        // -inf is the documented interference kill switch; +inf is not.
        if self.interference_gain_db == f64::INFINITY || self.interference_gain_db.is_nan() {
            bail!("interference_gain_db must be finite or -inf");
        }
        if self.backhaul_delay < 0.0 || self.backhaul_delay >= self.deadline {
            bail!("backhaul_delay must lie in [0, deadline)");
        }
        if self.num_realizations == 0 || self.distributed_realizations == 0 {
            bail!("realization counts must be at least 1");
        }
        if self.robustness_inits == 0 {
            bail!("robustness_inits must be at least 1");
        }
        if let Some(grid) = &self.eta_grid {
            if grid.is_empty() || grid.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
                bail!("eta_grid must be non-empty and positive");
            }
        }
        if self.deadline_grid.is_empty()
            || self.deadline_grid.iter().any(|&t| !(t > self.backhaul_delay && t.is_finite()))
        {
            bail!("deadline_grid must be non-empty with every entry above backhaul_delay");
        }
        if self.rx_antenna_grid.is_empty() || self.rx_antenna_grid.contains(&0) {
            bail!("rx_antenna_grid must be non-empty and positive");
        }
        match self.method.as_str() {
            "centralized" | "dual-lipschitz" | "dual-slack" | "dual-slack-newton" | "dra" => {}
            other => bail!("unknown method {other:?}"),
        }
        Ok(())
    }

    /// Total user count.
    pub fn num_users(&self) -> usize {
        self.cells * self.users_per_cell
    }

    /// Task rate constant c = b · bit_time with b taken from `bits` or η.
    pub fn task_rate_constant(&self) -> f64 {
        let bits = self.bits.unwrap_or(self.cpu_cycles / self.eta);
        bits * self.bit_time
    }

    /// The η grid: configured, or 10 log-spaced points on [10, 10⁴].
    pub fn eta_points(&self) -> Vec<f64> {
        if let Some(g) = &self.eta_grid {
            return g.clone();
        }
        let (lo, hi, n) = (10f64, 1e4f64, 10usize);
        (0..n)
            .map(|k| {
                let t = k as f64 / (n - 1) as f64;
                10f64.powf(lo.log10() + t * (hi.log10() - lo.log10()))
            })
            .collect()
    }
}

/// Optional overrides of the solver's scenario-sized defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOverrides {
    /// Outer termination tolerance δ on the energy decrease.
    pub delta: Option<f64>,
    pub max_outer: Option<usize>,
    pub step_initial: Option<f64>,
    pub step_decay: Option<f64>,
    pub inner_grad_tol: Option<f64>,
    pub inner_max_iters: Option<usize>,
    pub dual_tol: Option<f64>,
    pub max_dual_iters: Option<usize>,
    pub dual_beta0: Option<f64>,
}

impl SolverOverrides {
    pub fn apply(&self, cfg: &mut SurrogateConfig) {
        if let Some(v) = self.delta {
            cfg.energy_tol = v;
        }
        if let Some(v) = self.max_outer {
            cfg.max_outer = v;
        }
        if let Some(v) = self.step_initial {
            cfg.step_initial = v;
        }
        if let Some(v) = self.step_decay {
            cfg.step_decay = v;
        }
        if let Some(v) = self.inner_grad_tol {
            cfg.inner_grad_tol = v;
        }
        if let Some(v) = self.inner_max_iters {
            cfg.inner_max_iters = v;
        }
        if let Some(v) = self.dual_tol {
            cfg.dual_tol = v;
        }
        if let Some(v) = self.max_dual_iters {
            cfg.max_dual_iters = v;
        }
        if self.dual_beta0.is_some() {
            cfg.dual_beta0 = self.dual_beta0;
        }
    }
}
