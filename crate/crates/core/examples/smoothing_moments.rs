//! Kernel-smoothed moments of the event covariates over the non-event
//! visits, and the weighted covariate mean used in the score.
//!
//! cargo run --release --example smoothing_moments

use recurvis::smoothing::{resolve_bandwidth, smoothed_moments, weighted_covariate_mean};
use recurvis::*;

fn main() -> Result<()> {
    let config = ScenarioConfig { n: 500, ..scenario_preset("II")? };
    let sim = generate_cohort(&config, 0)?;
    let z: Vec<String> = ["Z1", "Z2", "Z3"].map(String::from).to_vec();
    let spec = SimulatedCohort::history_spec();
    let h = resolve_bandwidth(&config.kernel, config.n)?;
    let (beta, alpha) = (config.beta(), config.alpha_history());
    println!("bandwidth {h:.4}");
    for t in [0.1f64, 1.0, 2.5, 4.0] {
        let m = smoothed_moments(&sim.cohort, &z, &spec, t.max(h), &beta, &alpha, h)?;
        let mean = weighted_covariate_mean(&sim.cohort, &z, &spec, t, &beta, &alpha, h)?;
        println!(
            "t {t:.1}: S0 {:.4} from {} visits, mean {:+.3?}",
            m.s0_value(),
            m.window_count,
            mean
        );
    }
    Ok(())
}
