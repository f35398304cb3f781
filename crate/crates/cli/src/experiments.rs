//! Experiment drivers: the η sweep (joint optimization against the
//! static-split baseline), the latency/antenna convergence study with a
//! random-initialization robustness check, and the four-method distributed
//! comparison. Each driver writes sorted CSVs plus scenario snapshots into
//! an output directory and returns its rows so tests can analyze in-process.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use mecsolve_core::linalg::project_psd;
use mecsolve_core::{
    initial_allocation, sca_run, AllocationState, CoreError, DualTrace, HermitianMatrix,
    IterRecord, NetworkScenario, PsdMatrix, ScaMethod, ScaOutcome, SurrogateConfig,
};

use crate::audit::{audit_state, require_feasible, AuditReport};
use crate::config::ExperimentConfig;
use crate::csvout::{self, num, ResultRow, SCHEMA_VERSION};
use crate::dra::dra_baseline;
use crate::scenario_gen::{gaussian_matrix, generate_scenario, ScenarioShape};

/// Aggregate outcome of a driver run: the emitted result rows plus the
/// counters the process exit code is derived from.
#[derive(Debug)]
pub struct DriverReport {
    pub rows: Vec<ResultRow>,
    /// Solves that started from a feasible allocation.
    pub feasible_solves: usize,
    /// Realization/grid-point combinations with no feasible start.
    pub infeasible: usize,
    /// Feasible solves that hit the iteration cap before the tolerance.
    pub unconverged: usize,
}

impl DriverReport {
    /// 0 = clean, 2 = nothing was feasible, 3 = a solve failed to converge.
    pub fn exit_code(&self) -> u8 {
        if self.feasible_solves == 0 {
            2
        } else if self.unconverged > 0 {
            3
        } else {
            0
        }
    }
}

/// Maps a config method name to the solver enum; `None` is the static-split
/// baseline, which is not an inner subproblem method.
pub fn method_from_name(name: &str) -> Result<Option<ScaMethod>> {
    Ok(match name {
        "centralized" => Some(ScaMethod::Centralized),
        "dual-lipschitz" => Some(ScaMethod::DualLipschitz),
        "dual-slack" => Some(ScaMethod::DualSlack),
        "dual-slack-newton" => Some(ScaMethod::DualSlackNewton),
        "dra" => None,
        other => bail!("unknown method {other:?}"),
    })
}

/// Scenario-sized solver defaults with the config's overrides applied.
pub fn solver_for(s: &NetworkScenario, cfg: &ExperimentConfig) -> SurrogateConfig {
    let mut solver = SurrogateConfig::for_scenario(s);
    cfg.solver.apply(&mut solver);
    solver
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn infeasible_row(realization: usize, method: &str, eta: f64, deadline: f64) -> ResultRow {
    ResultRow {
        realization,
        method: method.to_owned(),
        eta,
        deadline,
        energy: f64::INFINITY,
        outer_iters: 0,
        dual_iters: 0,
        max_violation: f64::INFINITY,
        converged: false,
        wall_ms: 0.0,
    }
}

/// Runs the outer loop from every start and keeps the lowest-energy outcome
/// (every outcome is a feasible iterate by construction), preferring a
/// converged run on ties. The extra starts are warm starts (the baseline
/// solution, the previous grid point's solution), so this is a plain
/// multistart; every candidate is a genuine solver run. Energy-first ordering
/// keeps the reported joint energy at or below every start's energy — in
/// particular at or below the static-split baseline it was seeded with.
fn best_of_starts(
    s: &NetworkScenario,
    starts: &[AllocationState],
    solver: &SurrogateConfig,
    method: ScaMethod,
) -> Result<Option<ScaOutcome>> {
    let mut best: Option<ScaOutcome> = None;
    for z0 in starts {
        let out = match sca_run(s, z0, solver, method) {
            Ok(out) => out,
            Err(CoreError::Infeasible(_)) => continue,
            Err(e) => return Err(e.into()),
        };
        let better = match &best {
            None => true,
            Some(b) => {
                out.energy < b.energy || (out.energy == b.energy && out.converged && !b.converged)
            }
        };
        if better {
            best = Some(out);
        }
    }
    Ok(best)
}

/// Audits the outcome that backs a result row. Converged rows must pass;
/// a failure there is a solver bug, not an input problem.
fn audited(s: &NetworkScenario, out: &ScaOutcome, context: &str) -> Result<AuditReport> {
    if out.converged {
        require_feasible(s, &out.state, context)
    } else {
        Ok(audit_state(s, &out.state))
    }
}

// ---------------------------------------------------------------------------
// η sweep
// ---------------------------------------------------------------------------

/// For each η in the grid and each channel realization, solves the joint
/// problem and the static-split baseline, and emits per-row results plus a
/// per-η summary. The grid is swept in ascending η so the previous solution
/// can warm-start the next point (raising η only shrinks the bit volume,
/// which relaxes every latency constraint, so the old solution stays
/// feasible).
pub fn run_eta(cfg: &ExperimentConfig, out: &Path, deterministic: bool) -> Result<DriverReport> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let Some(method) = method_from_name(&cfg.method)? else {
        bail!("the η sweep needs a joint subproblem method; got method = \"dra\"");
    };
    let mut etas = cfg.eta_points();
    etas.sort_by(f64::total_cmp);

    struct RealizationOut {
        rows: Vec<ResultRow>,
        scenario_json: String,
        traces: Vec<(usize, Vec<IterRecord>)>,
        feasible: usize,
        infeasible: usize,
        unconverged: usize,
    }

    let shape0 = ScenarioShape::from_config(cfg);
    let per_real: Vec<RealizationOut> = (0..cfg.num_realizations as u64)
        .into_par_iter()
        .map(|r| -> Result<RealizationOut> {
            let base_scenario = generate_scenario(&shape0, r)?;
            let scenario_json = serde_json::to_string_pretty(&base_scenario)?;
            let mut rows = Vec::new();
            let mut traces = Vec::new();
            let (mut feasible, mut infeasible, mut unconverged) = (0usize, 0usize, 0usize);
            let mut prev: Option<AllocationState> = None;

            for (k, &eta) in etas.iter().enumerate() {
                let shape = shape0.clone().with_eta(eta, cfg.bit_time);
                let s = generate_scenario(&shape, r)?;
                let solver = solver_for(&s, cfg);

                // Baseline first; its solution doubles as a joint warm start.
                let t_dra = Instant::now();
                let dra = dra_baseline(&s, &solver)?;
                match &dra.run {
                    Some(run) => {
                        let audit = audited(&s, run, &format!("dra r{r} eta {eta}"))?;
                        feasible += 1;
                        if !run.converged {
                            unconverged += 1;
                        }
                        rows.push(ResultRow {
                            realization: r as usize,
                            method: "dra".into(),
                            eta,
                            deadline: cfg.deadline,
                            energy: run.energy,
                            outer_iters: run.outer_iters,
                            dual_iters: run.dual_iters_total,
                            max_violation: audit.max_latency_g,
                            converged: run.converged,
                            wall_ms: ms(t_dra),
                        });
                    }
                    None => {
                        infeasible += 1;
                        rows.push(infeasible_row(r as usize, "dra", eta, cfg.deadline));
                    }
                }

                let t_joint = Instant::now();
                let mut starts = Vec::new();
                match initial_allocation(&s) {
                    Ok(z) => starts.push(z),
                    Err(CoreError::Infeasible(_)) => {}
                    Err(e) => return Err(e.into()),
                }
                if let Some(run) = &dra.run {
                    starts.push(run.state.clone());
                }
                if let Some(p) = prev.take() {
                    starts.push(p);
                }
                match best_of_starts(&s, &starts, &solver, method)? {
                    Some(outcome) => {
                        let audit = audited(&s, &outcome, &format!("joint r{r} eta {eta}"))?;
                        feasible += 1;
                        if !outcome.converged {
                            unconverged += 1;
                        }
                        rows.push(ResultRow {
                            realization: r as usize,
                            method: cfg.method.clone(),
                            eta,
                            deadline: cfg.deadline,
                            energy: outcome.energy,
                            outer_iters: outcome.outer_iters,
                            dual_iters: outcome.dual_iters_total,
                            max_violation: audit.max_latency_g,
                            converged: outcome.converged,
                            wall_ms: ms(t_joint),
                        });
                        if r == 0 {
                            traces.push((k, outcome.trace.records.clone()));
                        }
                        prev = Some(outcome.state);
                    }
                    None => {
                        infeasible += 1;
                        rows.push(infeasible_row(r as usize, &cfg.method, eta, cfg.deadline));
                    }
                }
            }
            Ok(RealizationOut { rows, scenario_json, traces, feasible, infeasible, unconverged })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let (mut feasible, mut infeasible, mut unconverged) = (0usize, 0usize, 0usize);
    for (r, ro) in per_real.iter().enumerate() {
        std::fs::write(out.join(format!("scenario_r{r}.json")), &ro.scenario_json)?;
        for (k, recs) in &ro.traces {
            csvout::write_trace(&out.join(format!("trace_r{r}_eta{k}.csv")), recs, deterministic)?;
        }
        rows.extend(ro.rows.iter().cloned());
        feasible += ro.feasible;
        infeasible += ro.infeasible;
        unconverged += ro.unconverged;
    }
    csvout::write_results(&out.join("results.csv"), &rows, deterministic)?;

    // Per-η counts and means over converged rows; the gap column is the
    // baseline energy saved by the joint solve, as a fraction of baseline.
    let mut summary = Vec::new();
    for (k, &eta) in etas.iter().enumerate() {
        let pick = |name: &str| -> Vec<&ResultRow> {
            rows.iter()
                .filter(|row| row.method == name && row.eta == eta && row.converged)
                .collect()
        };
        let joint = pick(&cfg.method);
        let dra = pick("dra");
        let mean = |v: &[&ResultRow]| {
            if v.is_empty() {
                f64::NAN
            } else {
                v.iter().map(|row| row.energy).sum::<f64>() / v.len() as f64
            }
        };
        let mut gaps = Vec::new();
        for d in &dra {
            if let Some(j) = joint.iter().find(|j| j.realization == d.realization) {
                gaps.push((d.energy - j.energy) / d.energy.max(f64::MIN_POSITIVE));
            }
        }
        let mean_gap = if gaps.is_empty() {
            f64::NAN
        } else {
            gaps.iter().sum::<f64>() / gaps.len() as f64
        };
        summary.push((
            vec![k as u64],
            format!(
                "{},{},{},{},{},{},{}",
                SCHEMA_VERSION,
                num(eta),
                joint.len(),
                dra.len(),
                num(mean(&joint)),
                num(mean(&dra)),
                num(mean_gap)
            ),
        ));
    }
    csvout::write_table(
        &out.join("summary_eta.csv"),
        "schema_version,eta,joint_converged,dra_converged,mean_energy_joint,mean_energy_dra,mean_rel_gap",
        summary,
        deterministic,
    )?;

    Ok(DriverReport { rows, feasible_solves: feasible, infeasible, unconverged })
}

// ---------------------------------------------------------------------------
// Convergence / latency study
// ---------------------------------------------------------------------------

/// Terminal energy of one (deadline, antennas, realization) solve.
#[derive(Debug, Clone)]
pub struct TerminalRow {
    pub deadline: f64,
    pub rx_antennas: usize,
    pub realization: usize,
    pub energy: f64,
    pub outer_iters: usize,
    pub converged: bool,
}

/// One run of the random-initialization robustness study.
#[derive(Debug, Clone)]
pub struct InitRow {
    pub init: usize,
    pub energy: f64,
    pub outer_iters: usize,
    pub converged: bool,
}

#[derive(Debug)]
pub struct ConvergenceData {
    pub report: DriverReport,
    pub terminal: Vec<TerminalRow>,
    pub inits: Vec<InitRow>,
}

/// Blends the reference start toward independent random covariances, halving
/// the blend until the sufficient feasibility test passes, then pairs the
/// result with its witness cycle shares (plus the spare budget spread in
/// proportion to cycle demands, which pushes every constraint strictly
/// inside). Returns `None` if even tiny blends fail.
fn random_feasible_init(
    s: &NetworkScenario,
    base: &AllocationState,
    seed: u64,
    init: u64,
) -> Option<AllocationState> {
    let n = s.num_users();
    // Initialization streams live far above the realization streams, so the
    // two families of draws can never collide.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((1u64 << 32) | init);
    let targets: Vec<PsdMatrix> = (0..n)
        .map(|i| {
            let d = s.tx_antennas(i);
            let g = gaussian_matrix(&mut rng, d, d, 1.0);
            let gram = HermitianMatrix::symmetrized(&(&g * g.adjoint()));
            let rho = 0.2 + 0.8 * rng.gen::<f64>();
            let scale = rho * s.power_budget(i) / gram.trace().max(f64::MIN_POSITIVE);
            project_psd(&HermitianMatrix::symmetrized(
                &(gram.as_matrix() * Complex::new(scale, 0.0)),
            ))
        })
        .collect();

    let mut t = 1.0;
    for _ in 0..40 {
        let q: Vec<PsdMatrix> = base
            .covariances
            .iter()
            .zip(&targets)
            .map(|(q0, r)| {
                let m = q0.as_matrix() * Complex::new(1.0 - t, 0.0)
                    + r.as_matrix() * Complex::new(t, 0.0);
                project_psd(&HermitianMatrix::symmetrized(&m))
            })
            .collect();
        let report = s.multicell_feasibility(&q);
        if report.feasible {
            let mut f = report.witness_compute.expect("feasible report carries a witness");
            let spare = (s.cloud_budget() - f.iter().sum::<f64>()).max(0.0);
            let wsum: f64 = (0..n).map(|i| s.task(i).cpu_cycles).sum();
            for (i, fi) in f.iter_mut().enumerate() {
                *fi += spare * s.task(i).cpu_cycles / wsum;
            }
            return AllocationState::new(s, q, f).ok();
        }
        t *= 0.5;
    }
    None
}

/// Sweeps deadline × receive-antenna grids at the study's η, emitting
/// per-iteration mean-energy curves (series padded with their final energy)
/// and terminal results, then reruns one fixed scenario from random feasible
/// initializations.
pub fn run_convergence(
    cfg: &ExperimentConfig,
    out: &Path,
    deterministic: bool,
) -> Result<ConvergenceData> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let Some(method) = method_from_name(&cfg.method)? else {
        bail!("the convergence study needs a joint subproblem method; got method = \"dra\"");
    };
    let grid: Vec<(f64, usize)> = cfg
        .deadline_grid
        .iter()
        .flat_map(|&t| cfg.rx_antenna_grid.iter().map(move |&rx| (t, rx)))
        .collect();
    let shape_for = |gi: usize| -> ScenarioShape {
        let mut shape = ScenarioShape::from_config(cfg);
        shape.task.deadline = grid[gi].0;
        shape.rx_antennas = grid[gi].1;
        shape.with_eta(cfg.convergence_eta, cfg.bit_time)
    };

    struct SolveOut {
        gi: usize,
        r: usize,
        /// `None` when no feasible start exists for this realization.
        outcome: Option<(ScaOutcome, f64, f64, AuditReport)>,
    }

    let jobs: Vec<(usize, u64)> = (0..grid.len())
        .flat_map(|gi| (0..cfg.num_realizations as u64).map(move |r| (gi, r)))
        .collect();
    let solved: Vec<SolveOut> = jobs
        .par_iter()
        .map(|&(gi, r)| -> Result<SolveOut> {
            let s = generate_scenario(&shape_for(gi), r)?;
            let solver = solver_for(&s, cfg);
            let z0 = match initial_allocation(&s) {
                Ok(z) => z,
                Err(CoreError::Infeasible(_)) => {
                    return Ok(SolveOut { gi, r: r as usize, outcome: None })
                }
                Err(e) => return Err(e.into()),
            };
            let start_energy = s.total_energy(&z0.covariances);
            let t0 = Instant::now();
            let outcome = sca_run(&s, &z0, &solver, method)?;
            let wall = ms(t0);
            let audit = audited(&s, &outcome, &format!("grid {gi} r{r}"))?;
            Ok(SolveOut { gi, r: r as usize, outcome: Some((outcome, start_energy, wall, audit)) })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut terminal = Vec::new();
    let (mut feasible, mut infeasible, mut unconverged) = (0usize, 0usize, 0usize);
    for so in &solved {
        let (deadline, rx) = grid[so.gi];
        match &so.outcome {
            Some((outcome, _, wall, audit)) => {
                feasible += 1;
                if !outcome.converged {
                    unconverged += 1;
                }
                rows.push(ResultRow {
                    realization: so.r,
                    method: cfg.method.clone(),
                    eta: cfg.convergence_eta,
                    deadline,
                    energy: outcome.energy,
                    outer_iters: outcome.outer_iters,
                    dual_iters: outcome.dual_iters_total,
                    max_violation: audit.max_latency_g,
                    converged: outcome.converged,
                    wall_ms: *wall,
                });
                terminal.push(TerminalRow {
                    deadline,
                    rx_antennas: rx,
                    realization: so.r,
                    energy: outcome.energy,
                    outer_iters: outcome.outer_iters,
                    converged: outcome.converged,
                });
                if so.r == 0 {
                    csvout::write_trace(
                        &out.join(format!("trace_g{}_r0.csv", so.gi)),
                        &outcome.trace.records,
                        deterministic,
                    )?;
                    let s = generate_scenario(&shape_for(so.gi), 0)?;
                    std::fs::write(
                        out.join(format!("scenario_g{}_r0.json", so.gi)),
                        serde_json::to_string_pretty(&s)?,
                    )?;
                }
            }
            None => {
                infeasible += 1;
                rows.push(infeasible_row(so.r, &cfg.method, cfg.convergence_eta, deadline));
                terminal.push(TerminalRow {
                    deadline,
                    rx_antennas: rx,
                    realization: so.r,
                    energy: f64::INFINITY,
                    outer_iters: 0,
                    converged: false,
                });
            }
        }
    }
    csvout::write_results(&out.join("results.csv"), &rows, deterministic)?;

    // Mean energy by outer iteration for each grid point; iteration 0 is the
    // start, shorter series carry their final energy forward, and `count`
    // says how many series genuinely reach that iteration.
    let mut curve_rows = Vec::new();
    for (gi, &(deadline, rx)) in grid.iter().enumerate() {
        let series: Vec<Vec<f64>> = solved
            .iter()
            .filter(|so| so.gi == gi)
            .filter_map(|so| so.outcome.as_ref())
            .map(|(outcome, start_energy, _, _)| {
                let mut e = vec![*start_energy];
                e.extend(outcome.trace.records.iter().map(|rec| rec.energy));
                e
            })
            .collect();
        if series.is_empty() {
            continue;
        }
        let maxlen = series.iter().map(Vec::len).max().unwrap();
        for it in 0..maxlen {
            let count = series.iter().filter(|e| e.len() > it).count();
            let mean = series
                .iter()
                .map(|e| *e.get(it).unwrap_or_else(|| e.last().unwrap()))
                .sum::<f64>()
                / series.len() as f64;
            curve_rows.push((
                vec![gi as u64, it as u64],
                format!(
                    "{},{},{},{},{},{}",
                    SCHEMA_VERSION,
                    num(deadline),
                    rx,
                    it,
                    num(mean),
                    count
                ),
            ));
        }
    }
    csvout::write_table(
        &out.join("curves.csv"),
        "schema_version,deadline,rx_antennas,iter,mean_energy,count",
        curve_rows,
        deterministic,
    )?;

    // Robustness study: the configured scenario (realization 0) rerun from
    // random feasible starts.
    let mut shape = ScenarioShape::from_config(cfg);
    shape = shape.with_eta(cfg.convergence_eta, cfg.bit_time);
    let s = generate_scenario(&shape, 0)?;
    let solver = solver_for(&s, cfg);
    let inits: Vec<InitRow> = match initial_allocation(&s) {
        Err(CoreError::Infeasible(_)) => {
            infeasible += 1;
            Vec::new()
        }
        Err(e) => return Err(e.into()),
        Ok(z_ref) => (0..cfg.robustness_inits as u64)
            .into_par_iter()
            .map(|i| -> Result<InitRow> {
                let z0 = random_feasible_init(&s, &z_ref, cfg.seed, i)
                    .unwrap_or_else(|| z_ref.clone());
                let outcome = sca_run(&s, &z0, &solver, method)?;
                audited(&s, &outcome, &format!("init {i}"))?;
                Ok(InitRow {
                    init: i as usize,
                    energy: outcome.energy,
                    outer_iters: outcome.outer_iters,
                    converged: outcome.converged,
                })
            })
            .collect::<Result<Vec<_>>>()?,
    };
    feasible += inits.len();
    unconverged += inits.iter().filter(|row| !row.converged).count();
    let init_rows = inits
        .iter()
        .map(|row| {
            (
                vec![row.init as u64],
                format!(
                    "{},{},{},{},{}",
                    SCHEMA_VERSION,
                    row.init,
                    num(row.energy),
                    row.outer_iters,
                    row.converged
                ),
            )
        })
        .collect();
    csvout::write_table(
        &out.join("inits.csv"),
        "schema_version,init,energy,outer_iters,converged",
        init_rows,
        deterministic,
    )?;

    Ok(ConvergenceData {
        report: DriverReport { rows, feasible_solves: feasible, infeasible, unconverged },
        terminal,
        inits,
    })
}

// ---------------------------------------------------------------------------
// Distributed comparison
// ---------------------------------------------------------------------------

pub const DISTRIBUTED_METHODS: [(ScaMethod, &str); 4] = [
    (ScaMethod::Centralized, "centralized"),
    (ScaMethod::DualLipschitz, "dual-lipschitz"),
    (ScaMethod::DualSlack, "dual-slack"),
    (ScaMethod::DualSlackNewton, "dual-slack-newton"),
];

/// Runs all four subproblem methods from the identical start on each
/// realization (at the comparison's own power budget and tolerance), and
/// emits energy against the cumulative inner+outer iteration index along
/// with message counts and multiplier-ascent traces.
pub fn run_distributed(
    cfg: &ExperimentConfig,
    out: &Path,
    deterministic: bool,
) -> Result<DriverReport> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut shape = ScenarioShape::from_config(cfg);
    shape.power_budget = cfg.distributed_power_budget;

    struct RealOut {
        rows: Vec<ResultRow>,
        curve_rows: Vec<(Vec<u64>, String)>,
        dual_files: Vec<(String, Vec<DualTrace>)>,
        scenario_json: String,
        feasible: usize,
        infeasible: usize,
        unconverged: usize,
    }

    let per_real: Vec<RealOut> = (0..cfg.distributed_realizations as u64)
        .into_par_iter()
        .map(|r| -> Result<RealOut> {
            let s = generate_scenario(&shape, r)?;
            let scenario_json = serde_json::to_string_pretty(&s)?;
            // The comparison's tolerance and relaxation decay outrank the
            // generic solver overrides.
            let mut solver = solver_for(&s, cfg);
            solver.energy_tol = cfg.distributed_delta;
            solver.step_decay = cfg.distributed_step_decay;

            let mut rows = Vec::new();
            let mut curve_rows = Vec::new();
            let mut dual_files = Vec::new();
            let (mut feasible, mut infeasible, mut unconverged) = (0usize, 0usize, 0usize);
            match initial_allocation(&s) {
                Err(CoreError::Infeasible(_)) => {
                    infeasible += 1;
                    for (_, name) in DISTRIBUTED_METHODS {
                        rows.push(infeasible_row(r as usize, name, cfg.eta, cfg.deadline));
                    }
                }
                Err(e) => return Err(e.into()),
                Ok(z0) => {
                    for (mi, (m, name)) in DISTRIBUTED_METHODS.iter().enumerate() {
                        let t0 = Instant::now();
                        let outcome = sca_run(&s, &z0, &solver, *m)?;
                        let wall = ms(t0);
                        let audit = audited(&s, &outcome, &format!("{name} r{r}"))?;
                        feasible += 1;
                        if !outcome.converged {
                            unconverged += 1;
                        }
                        let mut m_cum = 0usize;
                        for rec in &outcome.trace.records {
                            m_cum += rec.inner_iters + 1;
                            curve_rows.push((
                                vec![r, mi as u64, rec.iter as u64],
                                format!(
                                    "{},{},{},{},{},{},{}",
                                    SCHEMA_VERSION,
                                    r,
                                    name,
                                    rec.iter,
                                    m_cum,
                                    num(rec.energy),
                                    rec.messages_cumulative
                                ),
                            ));
                        }
                        if r == 0 && !outcome.dual_traces.is_empty() {
                            dual_files.push((name.to_string(), outcome.dual_traces.clone()));
                        }
                        rows.push(ResultRow {
                            realization: r as usize,
                            method: name.to_string(),
                            eta: cfg.eta,
                            deadline: cfg.deadline,
                            energy: outcome.energy,
                            outer_iters: outcome.outer_iters,
                            dual_iters: outcome.dual_iters_total,
                            max_violation: audit.max_latency_g,
                            converged: outcome.converged,
                            wall_ms: wall,
                        });
                    }
                }
            }
            Ok(RealOut {
                rows,
                curve_rows,
                dual_files,
                scenario_json,
                feasible,
                infeasible,
                unconverged,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut curve_rows = Vec::new();
    let (mut feasible, mut infeasible, mut unconverged) = (0usize, 0usize, 0usize);
    for (r, ro) in per_real.into_iter().enumerate() {
        std::fs::write(out.join(format!("scenario_r{r}.json")), &ro.scenario_json)?;
        for (name, traces) in &ro.dual_files {
            csvout::write_dual_trace(
                &out.join(format!("dualtrace_r{r}_{name}.csv")),
                traces,
                deterministic,
            )?;
        }
        rows.extend(ro.rows);
        curve_rows.extend(ro.curve_rows);
        feasible += ro.feasible;
        infeasible += ro.infeasible;
        unconverged += ro.unconverged;
    }
    csvout::write_results(&out.join("results.csv"), &rows, deterministic)?;
    csvout::write_table(
        &out.join("curves.csv"),
        "schema_version,realization,method,iter,m_cumulative,energy,messages_cumulative",
        curve_rows,
        deterministic,
    )?;

    // Per-method means over converged rows.
    let mut summary = Vec::new();
    for (mi, (_, name)) in DISTRIBUTED_METHODS.iter().enumerate() {
        let picked: Vec<&ResultRow> =
            rows.iter().filter(|row| row.method == *name && row.converged).collect();
        let mean = |f: &dyn Fn(&ResultRow) -> f64| {
            if picked.is_empty() {
                f64::NAN
            } else {
                picked.iter().map(|row| f(row)).sum::<f64>() / picked.len() as f64
            }
        };
        summary.push((
            vec![mi as u64],
            format!(
                "{},{},{},{},{},{}",
                SCHEMA_VERSION,
                name,
                picked.len(),
                num(mean(&|row| row.energy)),
                num(mean(&|row| row.outer_iters as f64)),
                num(mean(&|row| row.dual_iters as f64))
            ),
        ));
    }
    csvout::write_table(
        &out.join("summary_distributed.csv"),
        "schema_version,method,converged,mean_energy,mean_outer_iters,mean_dual_iters",
        summary,
        deterministic,
    )?;

    Ok(DriverReport { rows, feasible_solves: feasible, infeasible, unconverged })
}
