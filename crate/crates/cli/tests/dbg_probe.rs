use mecsolve_cli::config::ExperimentConfig;
use mecsolve_cli::scenario_gen::{generate_scenario, ScenarioShape};
use mecsolve_core::{initial_allocation, sca_run, stationarity_residual, ScaMethod, SurrogateConfig};

#[test]
fn probe_tight_run() {
    let cfg = ExperimentConfig::default();
    let s = generate_scenario(&ScenarioShape::from_config(&cfg), 0).unwrap();
    let z0 = initial_allocation(&s).unwrap();
    let mut solver = SurrogateConfig::for_scenario(&s);
    solver.energy_tol = 1e-6;
    let out = sca_run(&s, &z0, &solver, ScaMethod::Centralized).unwrap();
    println!("converged={} outers={} energy={:.9e}", out.converged, out.outer_iters, out.energy);
    let n = out.trace.records.len();
    for rec in out.trace.records.iter().skip(n.saturating_sub(25)) {
        println!(
            "iter {:3}  energy {:.12e}  maxg {:.3e}",
            rec.iter, rec.energy, rec.max_constraint
        );
    }
    let res = stationarity_residual(&s, &out.state, &solver).unwrap();
    println!("residual {res:.6e}");
}
