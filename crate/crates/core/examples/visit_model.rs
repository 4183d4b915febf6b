//! Fits the visit-process model alone and prints the baseline visit rate.
//!
//! cargo run --release --example visit_model

use recurvis::smoothing::resolve_bandwidth;
use recurvis::*;

fn main() -> Result<()> {
    let config = ScenarioConfig { n: 1000, ..scenario_preset("III")? };
    let sim = generate_cohort(&config, 0)?;
    let spec = SimulatedCohort::history_spec();
    println!("history rules: {}", serde_json::to_string(&spec).unwrap());

    let mut fit = fit_visit_model(&sim.cohort, &spec, &SolverConfig::default())?;
    println!("features  {:?}", fit.feature_names);
    println!("alpha_hat {:+.3?}", fit.alpha_hat);
    println!("truth     {:?}", config.alpha_history());

    // The generating baseline visit rate is 1.
    let h = resolve_bandwidth(&config.kernel, config.n)?;
    fit.fill_baseline_grid(h, sim.cohort.tau(), 11);
    for (t, rate) in &fit.baseline_grid {
        println!("lambda_0({t:.1}) = {rate:.3}");
    }
    Ok(())
}
