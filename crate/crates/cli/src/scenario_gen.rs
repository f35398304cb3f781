//! Deterministic Rayleigh scenario generation.
//!
//! Stream splitting: realization `k` of seed `s` draws from stream `k` of a
//! ChaCha8 generator seeded with `s`, so realizations are independent and
//! parallel workers never consume each other's randomness. Draw order is
//! fixed: users in cell-major order, target cells in index order, matrix
//! entries row-major, one Box–Muller pair per complex entry.

use crate::config::ExperimentConfig;
use anyhow::Result;
use mecsolve_core::{CMat, NetworkScenario, UserTask};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Everything that shapes one generated scenario. Experiment drivers tweak
/// single knobs (deadline, antennas, power) without touching the rest.
#[derive(Debug, Clone)]
pub struct ScenarioShape {
    pub cells: usize,
    pub users_per_cell: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub snr_db: f64,
    pub interference_gain_db: f64,
    pub power_budget: f64,
    pub noise_power: f64,
    pub cloud_budget: f64,
    pub task: UserTask,
    pub seed: u64,
}

impl ScenarioShape {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            cells: cfg.cells,
            users_per_cell: cfg.users_per_cell,
            tx_antennas: cfg.tx_antennas,
            rx_antennas: cfg.rx_antennas,
            snr_db: cfg.snr_db,
            interference_gain_db: cfg.interference_gain_db,
            power_budget: cfg.power_budget,
            noise_power: cfg.noise_power,
            cloud_budget: cfg.cloud_budget,
            task: UserTask {
                input_size_product: cfg.task_rate_constant(),
                cpu_cycles: cfg.cpu_cycles,
                deadline: cfg.deadline,
                backhaul_delay: cfg.backhaul_delay,
            },
            seed: cfg.seed,
        }
    }

    /// Replace the bit load keeping the cycle count: c = (w/η) · bit_time.
    pub fn with_eta(mut self, eta: f64, bit_time: f64) -> Self {
        self.task.input_size_product = self.task.cpu_cycles / eta * bit_time;
        self
    }
}

/// One standard-normal pair by Box–Muller from two uniform draws.
fn normal_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]: keeps ln finite
    let u2: f64 = rng.gen();
    let radius = (-2.0 * u1.ln()).sqrt();
    let angle = std::f64::consts::TAU * u2;
    (radius * angle.cos(), radius * angle.sin())
}

/// Circularly-symmetric complex Gaussian matrix with per-entry variance
/// `var` (split evenly between the real and imaginary parts).
pub(crate) fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, var: f64) -> CMat {
    let scale = (var / 2.0).sqrt();
    let mut entries = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let (re, im) = normal_pair(rng);
        entries.push(Complex::new(scale * re, scale * im));
    }
    CMat::from_fn(rows, cols, |r, c| entries[r * cols + c])
}

/// Deterministic function of `(shape.seed, realization)`: Rayleigh channels
/// with home-link per-entry variance `ς² = snr·σ²/(P·n_T)`, making the
/// expected per-user SNR `P·E‖H‖²/(n_R σ²)` hit the configured value;
/// cross-cell links are scaled by the interference gain (in power),
/// `-inf` dB switching them off exactly.
pub fn generate_scenario(shape: &ScenarioShape, realization: u64) -> Result<NetworkScenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(shape.seed);
    rng.set_stream(realization);

    let snr = 10f64.powf(shape.snr_db / 10.0);
    let home_var = snr * shape.noise_power / (shape.power_budget * shape.tx_antennas as f64);
    let cross_var = home_var * 10f64.powf(shape.interference_gain_db / 10.0);

    let n_users = shape.cells * shape.users_per_cell;
    let mut channels = Vec::with_capacity(n_users);
    for user in 0..n_users {
        let home = user / shape.users_per_cell;
        let per_cell: Vec<CMat> = (0..shape.cells)
            .map(|cell| {
                let var = if cell == home { home_var } else { cross_var };
                gaussian_matrix(&mut rng, shape.rx_antennas, shape.tx_antennas, var)
            })
            .collect();
        channels.push(per_cell);
    }

    Ok(NetworkScenario::new(
        vec![shape.users_per_cell; shape.cells],
        channels,
        vec![shape.noise_power; shape.cells],
        vec![shape.power_budget; n_users],
        shape.cloud_budget,
        vec![shape.task.clone(); n_users],
    )?)
}
