//! A reduced simulation study: bias and spread of each estimator.
//!
//! cargo run --release --example simulate_scenario -- IX 50

use recurvis::simlab::write_summary_csv;
use recurvis::*;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "IX".into());
    let reps = args.next().map_or(50, |r| r.parse().expect("reps must be an integer"));
    let config = ScenarioConfig { reps, ..scenario_preset(&name)? };
    let methods = [SimMethod::Proposed, SimMethod::Ppl, SimMethod::Locf, SimMethod::FullOracle];
    let run = run_scenario(&config, &methods, None)?;
    write_summary_csv(&run.rows, std::io::stdout().lock())
}
