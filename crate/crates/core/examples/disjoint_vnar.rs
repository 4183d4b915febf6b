//! Joint estimation when the event and visit covariates are disjoint, so
//! the visit rate may depend on the current value of its own covariate.
//!
//! cargo run --release --example disjoint_vnar

use recurvis::*;

fn main() -> Result<()> {
    let config = ScenarioConfig { n: 800, ..scenario_preset("Disjoint")? };
    let sim = generate_cohort(&config, 0)?;
    let partition = DisjointPartition::new(sim.event_covariate_names(), sim.visit_covariate_names());
    let fit = fit_disjoint(&sim.cohort, &partition, &KernelConfig::default(), &SolverConfig::default())?;
    println!("beta_hat  {:+.3?}  truth {:?}", fit.beta_hat, config.beta());
    println!("theta_hat {:+.3?}  truth [{}]", fit.theta_hat, config.alpha_w);
    println!("score norms {:.1e} / {:.1e}, iterations {}", fit.score_norms.0, fit.score_norms.1, fit.iterations);
    for w in &fit.warnings {
        println!("warning: {w}");
    }

    // The unweighted fit ignores the visit effect.
    let naive = fit_ppl(&sim.cohort, &partition.z_names, &KernelConfig::default(), &SolverConfig::default())?;
    println!("ppl       {:+.3?}", naive.beta_hat);
    Ok(())
}
