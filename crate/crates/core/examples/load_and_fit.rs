//! Round-trips a cohort through the CSV schema and fits the three rate
//! estimators to it.
//!
//! cargo run --release --example load_and_fit

use recurvis::cohort::{load_cohort, write_cohort};
use recurvis::eventfit::{LocfOptions, PreVisitImputation};
use recurvis::cohort::Fill;
use recurvis::*;

fn main() -> Result<()> {
    let config = ScenarioConfig { n: 400, ..scenario_preset("III")? };
    let sim = generate_cohort(&config, 0)?;

    let (mut subjects, mut visits) = (Vec::new(), Vec::new());
    write_cohort(&sim.cohort, &mut subjects, &mut visits)?;
    let cohort = load_cohort(subjects.as_slice(), visits.as_slice(), None)?;
    println!(
        "{} subjects, {} event visits, {} non-event visits, tau {:.3}",
        cohort.n(),
        cohort.event_count(),
        cohort.nonevent_count(),
        cohort.tau()
    );

    let z: Vec<String> = ["Z1", "Z2", "Z3"].map(String::from).to_vec();
    let kernel = KernelConfig::default();
    let solver = SolverConfig::default();
    let history = SimulatedCohort::history_spec();
    let locf = LocfOptions {
        pre_visit: PreVisitImputation::UseFill,
        fills: [("Z2", "Z2_0"), ("Z3", "Z3_0")]
            .into_iter()
            .map(|(k, b)| (k.to_string(), Fill::Baseline { baseline: b.to_string() }))
            .collect(),
    };

    println!("truth     {:?}", config.beta());
    for fit in [
        fit_proposed(&cohort, &z, &history, &kernel, &solver)?,
        fit_ppl(&cohort, &z, &kernel, &solver)?,
        fit_locf(&cohort, &z, &locf, &solver)?,
    ] {
        println!(
            "{:<9} {:+.3?}  |score| {:.1e}  iterations {}",
            fit.method.as_str(),
            fit.beta_hat,
            fit.score_norm,
            fit.iterations
        );
    }
    Ok(())
}
