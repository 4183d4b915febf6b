//! Subject-level bootstrap of the proposed estimator: the visit model is
//! refitted inside every replicate.
//!
//! cargo run --release --example bootstrap_inference

use recurvis::*;

fn main() -> Result<()> {
    let config = ScenarioConfig { n: 300, ..scenario_preset("II")? };
    let sim = generate_cohort(&config, 0)?;
    let z: Vec<String> = ["Z1", "Z2", "Z3"].map(String::from).to_vec();
    let spec = SimulatedCohort::history_spec();
    let kernel = KernelConfig::default();
    let solver = SolverConfig::default();

    let result = bootstrap(
        &sim.cohort,
        |c: &Cohort| Ok(fit_proposed(c, &z, &spec, &kernel, &solver)?.beta_hat),
        100,
        7,
    )?;
    println!("failed replicates: {}", result.n_failed);
    for (j, name) in z.iter().enumerate() {
        let (nlo, nhi) = result.ci_normal[j];
        let (plo, phi) = result.ci_percentile[j];
        println!(
            "{name}: {:+.3} (truth {:+.1})  se {:.3}  normal [{nlo:+.3}, {nhi:+.3}]  percentile [{plo:+.3}, {phi:+.3}]",
            result.estimate[j],
            config.beta()[j],
            result.se[j]
        );
    }
    Ok(())
}
