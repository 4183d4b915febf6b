//! Baseline cumulative rate from the kernel estimator and from the full-data
//! oracle, against the generating `t^2 / (2e)`.
//!
//! cargo run --release --example baseline_curves

use recurvis::*;

fn main() -> Result<()> {
    let config = ScenarioConfig { n: 2000, ..scenario_preset("I")? };
    let sim = generate_cohort(&config, 0)?;
    let solver = SolverConfig::default();
    let proposed = fit_proposed(
        &sim.cohort,
        &sim.event_covariate_names(),
        &SimulatedCohort::history_spec(),
        &KernelConfig::default(),
        &solver,
    )?;
    let oracle = fit_full_oracle(&sim, &solver)?;
    println!("{:>4} {:>9} {:>9} {:>9}", "t", "proposed", "oracle", "truth");
    for k in 0..=8 {
        let t = 0.5 * k as f64;
        println!(
            "{t:>4.1} {:>9.4} {:>9.4} {:>9.4}",
            proposed.cumulative_at(t),
            oracle.cumulative_at(t),
            t * t / (2.0 * std::f64::consts::E)
        );
    }
    Ok(())
}
