use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use mecsolve_cli::config::ExperimentConfig;
use mecsolve_cli::csvout::{self, ResultRow};
use mecsolve_cli::dra::dra_baseline;
use mecsolve_cli::experiments::{self, method_from_name, solver_for};
use mecsolve_cli::scenario_gen::{generate_scenario, ScenarioShape};
use mecsolve_core::{
    initial_allocation, sca_run, solve_single_user, waterfilling_covariance, CoreError, PsdMatrix,
    SingleUserOutcome, SingleUserProblem,
};

/// The configured problem (or the requested realization of it) admits no
/// feasible allocation.
const EXIT_INFEASIBLE: u8 = 2;
/// A solve ran but hit its iteration cap before the energy tolerance.
const EXIT_NO_CONVERGENCE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "mecsolve",
    version,
    about = "Energy-minimal radio and cloud-compute allocation for multicell MIMO offloading"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the closed-form single-user problem built from the config's
    /// link and task parameters (one cell, one user).
    SingleUser(ConfigArgs),
    /// Solve one channel realization of the configured network and write
    /// the result, trace, and scenario snapshot to the config's out_dir.
    Solve {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Subproblem method; defaults to the config's `method`.
        #[arg(long, value_parser = [
            "centralized", "dual-lipschitz", "dual-slack", "dual-slack-newton", "dra",
        ])]
        method: Option<String>,
    },
    /// Run a multi-realization experiment and write CSVs.
    Experiment {
        #[command(subcommand)]
        which: ExperimentKind,
    },
    /// Report feasibility of the configured scenario without solving.
    Validate(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum ExperimentKind {
    /// Energy against the cycles-per-bit ratio, joint vs. the static split.
    Eta(ExperimentArgs),
    /// Energy against the iteration index across deadline and antenna
    /// grids, plus a random-restart robustness study.
    Convergence(ExperimentArgs),
    /// All four subproblem methods on identical realizations.
    Distributed(ExperimentArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSVs and scenario snapshots.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress timestamps and wall-clock fields so reruns are
    /// byte-identical.
    #[arg(long)]
    deterministic: bool,
}

fn main() -> ExitCode {
    // Route clap's own exits through our code so the documented exit codes
    // (2 = infeasible, 3 = no convergence) stay unambiguous: usage errors
    // are 1, --help/--version are 0.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::SingleUser(args) => single_user(&load(&args)?),
        Command::Solve { cfg, method } => solve(&load(&cfg)?, method.as_deref()),
        Command::Experiment { which } => experiment(&which),
        Command::Validate(args) => validate(&load(&args)?),
    }
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn single_user(cfg: &ExperimentConfig) -> Result<u8> {
    let mut shape = ScenarioShape::from_config(cfg);
    shape.cells = 1;
    shape.users_per_cell = 1;
    let s = generate_scenario(&shape, 0)?;
    let p = SingleUserProblem::from_lone_user(&s)?;
    match solve_single_user(&p)? {
        SingleUserOutcome::Infeasible { slack } => {
            println!("infeasible: best-case latency overshoots the deadline by {slack:.6e} s");
            Ok(EXIT_INFEASIBLE)
        }
        outcome => {
            let verdict = match outcome {
                SingleUserOutcome::Feasible(_) => "strictly feasible (deadline met exactly)",
                SingleUserOutcome::Boundary(_) => "feasibility boundary (full power forced)",
                SingleUserOutcome::Infeasible { .. } => unreachable!(),
            };
            let sol = outcome.solution().expect("feasible outcomes carry a solution");
            println!("verdict:         {verdict}");
            println!("water level:     {:.12}", sol.water_level);
            println!("effective rank:  {}", sol.effective_rank);
            println!("rate:            {:.12} bits", sol.rate);
            println!("transmit power:  {:.12} of budget {}", sol.covariance.trace(), p.power_budget);
            println!("cloud share:     {:.6e} cycles/s", sol.compute_rate);
            println!("energy:          {:.12e} J", sol.energy);
            Ok(0)
        }
    }
}

fn solve(cfg: &ExperimentConfig, method_arg: Option<&str>) -> Result<u8> {
    let method_name = method_arg.unwrap_or(&cfg.method).to_string();
    let method = method_from_name(&method_name)?;
    let s = generate_scenario(&ScenarioShape::from_config(cfg), 0)?;
    let out_dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;
    std::fs::write(out_dir.join("scenario_r0.json"), serde_json::to_string_pretty(&s)?)?;
    let solver = solver_for(&s, cfg);

    let t0 = Instant::now();
    let outcome = match method {
        // Static-split baseline: shares frozen, radio still optimized.
        None => {
            let dra = dra_baseline(&s, &solver)?;
            match dra.run {
                None => {
                    println!(
                        "infeasible: no default covariance probe meets every deadline at the static split"
                    );
                    return Ok(EXIT_INFEASIBLE);
                }
                Some(run) => run,
            }
        }
        Some(m) => {
            let z0 = match initial_allocation(&s) {
                Ok(z) => z,
                Err(CoreError::Infeasible(msg)) => {
                    println!("infeasible: {msg}");
                    return Ok(EXIT_INFEASIBLE);
                }
                Err(e) => return Err(e.into()),
            };
            sca_run(&s, &z0, &solver, m)?
        }
    };
    let wall_ms = t0.elapsed().as_secs_f64() * 1e3;

    let audit = if outcome.converged {
        mecsolve_cli::audit::require_feasible(&s, &outcome.state, "solve")?
    } else {
        mecsolve_cli::audit::audit_state(&s, &outcome.state)
    };
    let row = ResultRow {
        realization: 0,
        method: method_name.clone(),
        eta: cfg.eta,
        deadline: cfg.deadline,
        energy: outcome.energy,
        outer_iters: outcome.outer_iters,
        dual_iters: outcome.dual_iters_total,
        max_violation: audit.max_latency_g,
        converged: outcome.converged,
        wall_ms,
    };
    csvout::write_results(&out_dir.join("results.csv"), &[row], false)?;
    csvout::write_trace(&out_dir.join("trace_solve.csv"), &outcome.trace.records, false)?;
    if !outcome.dual_traces.is_empty() {
        csvout::write_dual_trace(&out_dir.join("dualtrace_solve.csv"), &outcome.dual_traces, false)?;
    }

    println!("method:          {method_name}");
    println!("energy:          {:.12e} J", outcome.energy);
    println!("outer iters:     {}", outcome.outer_iters);
    println!("dual iters:      {}", outcome.dual_iters_total);
    println!("messages:        {}", outcome.messages_total);
    println!("max latency g:   {:.3e}", audit.max_latency_g);
    println!("converged:       {}", outcome.converged);
    println!("artifacts in:    {}", out_dir.display());
    Ok(if outcome.converged { 0 } else { EXIT_NO_CONVERGENCE })
}

fn experiment(which: &ExperimentKind) -> Result<u8> {
    let (args, name): (&ExperimentArgs, &str) = match which {
        ExperimentKind::Eta(a) => (a, "eta"),
        ExperimentKind::Convergence(a) => (a, "convergence"),
        ExperimentKind::Distributed(a) => (a, "distributed"),
    };
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let report = match which {
        ExperimentKind::Eta(_) => experiments::run_eta(&cfg, &args.out, args.deterministic)?,
        ExperimentKind::Convergence(_) => {
            experiments::run_convergence(&cfg, &args.out, args.deterministic)?.report
        }
        ExperimentKind::Distributed(_) => {
            experiments::run_distributed(&cfg, &args.out, args.deterministic)?
        }
    };
    println!(
        "experiment {name}: {} rows ({} feasible solves, {} infeasible, {} unconverged) -> {}",
        report.rows.len(),
        report.feasible_solves,
        report.infeasible,
        report.unconverged,
        args.out.display()
    );
    Ok(report.exit_code())
}

fn validate(cfg: &ExperimentConfig) -> Result<u8> {
    let s = generate_scenario(&ScenarioShape::from_config(cfg), 0)?;
    let n = s.num_users();
    // The same two probe families the solvers seed from: isotropic full
    // power, and per-user water-filling that ignores interference.
    let isotropic: Vec<PsdMatrix> = (0..n)
        .map(|i| {
            PsdMatrix::scaled_identity(s.tx_antennas(i), s.power_budget(i) / s.tx_antennas(i) as f64)
        })
        .collect::<mecsolve_core::Result<_>>()?;
    let waterfilled: Vec<PsdMatrix> = (0..n)
        .map(|i| {
            waterfilling_covariance(s.home_channel(i), s.noise_power(s.cell_of(i)), s.power_budget(i))
                .map(|(q, _)| q)
        })
        .collect::<mecsolve_core::Result<_>>()?;

    let mut any = false;
    for (name, probe) in
        [("isotropic full power", isotropic), ("interference-free water-filling", waterfilled)]
    {
        let rep = s.multicell_feasibility(&probe);
        let min_rate = rep.probe_rates.iter().cloned().fold(f64::INFINITY, f64::min);
        println!("probe {name}: {}", if rep.feasible { "feasible" } else { "not a witness" });
        println!(
            "  min user rate {min_rate:.4} bits, compute demand {:.4e} of budget {:.4e}",
            rep.compute_demand,
            s.cloud_budget()
        );
        if !rep.failing_users.is_empty() {
            println!("  users missing the transmit deadline outright: {:?}", rep.failing_users);
        }
        any |= rep.feasible;
    }
    if any {
        println!("verdict: feasible (a witness allocation exists)");
        Ok(0)
    } else {
        println!("verdict: no witness found; the scenario may be infeasible or just hard to seed");
        Ok(EXIT_INFEASIBLE)
    }
}
