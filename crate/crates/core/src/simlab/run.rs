use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_cohort, ScenarioConfig, SimulatedCohort};
use crate::cohort::Fill;
use crate::error::{Error, Result};
use crate::eventfit::{fit_full_oracle, fit_locf, fit_ppl, fit_proposed, LocfOptions, PreVisitImputation};
use crate::inference::{bootstrap, sample_sd, Z_975};
use crate::vnarfit::{fit_disjoint, DisjointPartition};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMethod {
    Proposed,
    Ppl,
    /// LOCF with the recorded time-zero values before the first visit.
    Locf,
    /// LOCF carrying the first visit's values backward.
    LocfBackwardFill,
    FullOracle,
    /// Joint `(beta, theta)` fit; needs the `W` covariate.
    Disjoint,
}

impl SimMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SimMethod::Proposed => "proposed",
            SimMethod::Ppl => "ppl",
            SimMethod::Locf => "locf",
            SimMethod::LocfBackwardFill => "locf_backward_fill",
            SimMethod::FullOracle => "full_oracle",
            SimMethod::Disjoint => "disjoint",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(name.to_string()))
            .map_err(|_| Error::InvalidConfig(format!("unknown method `{name}`")))
    }
}

/// Coefficient labels in estimate order.
pub fn coefficient_names(method: SimMethod) -> Vec<&'static str> {
    match method {
        SimMethod::Disjoint => vec!["beta_B", "beta_T1", "beta_T2", "theta_W"],
        _ => vec!["beta_B", "beta_T1", "beta_T2"],
    }
}

fn truth(config: &ScenarioConfig, method: SimMethod) -> Vec<f64> {
    let mut t = config.beta().to_vec();
    if method == SimMethod::Disjoint {
        t.push(config.alpha_w);
    }
    t
}

fn locf_options(pre_visit: PreVisitImputation) -> LocfOptions {
    let fills = [("Z2", "Z2_0"), ("Z3", "Z3_0")]
        .into_iter()
        .map(|(name, base)| {
            (
                name.to_string(),
                Fill::Baseline {
                    baseline: base.to_string(),
                },
            )
        })
        .collect();
    LocfOptions { pre_visit, fills }
}

/// Fits one method to one simulated cohort.
pub fn fit_replicate(sim: &SimulatedCohort, method: SimMethod) -> Result<Vec<f64>> {
    let config = &sim.config;
    let z = sim.event_covariate_names();
    let kernel = &config.kernel;
    let solver = &config.solver;
    let cohort = &sim.cohort;
    Ok(match method {
        SimMethod::Proposed => fit_proposed(cohort, &z, &SimulatedCohort::history_spec(), kernel, solver)?.beta_hat,
        SimMethod::Ppl => fit_ppl(cohort, &z, kernel, solver)?.beta_hat,
        SimMethod::Locf => fit_locf(cohort, &z, &locf_options(PreVisitImputation::UseFill), solver)?.beta_hat,
        SimMethod::LocfBackwardFill => {
            fit_locf(cohort, &z, &locf_options(PreVisitImputation::BackwardFill), solver)?.beta_hat
        }
        SimMethod::FullOracle => fit_full_oracle(sim, solver)?.beta_hat,
        SimMethod::Disjoint => {
            if !config.with_w {
                return Err(Error::InvalidConfig(
                    "the disjoint method needs a scenario with the W covariate".into(),
                ));
            }
            let partition = DisjointPartition::new(z, sim.visit_covariate_names());
            let fit = fit_disjoint(cohort, &partition, kernel, solver)?;
            fit.beta_hat.into_iter().chain(fit.theta_hat).collect()
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicateOutcome {
    pub rep: usize,
    pub method: SimMethod,
    pub estimate: Option<Vec<f64>>,
    /// Bootstrap standard errors, when requested and successful.
    pub se: Option<Vec<f64>>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub method: SimMethod,
    pub coefficient: String,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    /// Monte Carlo standard deviation; absent with fewer than two estimates.
    pub se: Option<f64>,
    /// Mean bootstrap standard error.
    pub see: Option<f64>,
    /// Coverage of the normal 95% bootstrap interval.
    pub cp: Option<f64>,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioRun {
    pub config: ScenarioConfig,
    pub rows: Vec<SummaryRow>,
    pub replicates: Vec<ReplicateOutcome>,
}

impl ScenarioRun {
    /// Successful estimates of one method, in replicate order.
    pub fn estimates(&self, method: SimMethod) -> Vec<&[f64]> {
        self.replicates
            .iter()
            .filter(|r| r.method == method)
            .filter_map(|r| r.estimate.as_deref())
            .collect()
    }

    pub fn row(&self, method: SimMethod, coefficient: &str) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.coefficient == coefficient)
    }
}

/// Seed of the bootstrap streams for replicate `rep`.
fn bootstrap_seed(seed: u64, rep: usize) -> u64 {
    seed ^ (rep as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn run_one(sim: &Result<SimulatedCohort>, rep: usize, method: SimMethod, b: Option<usize>) -> ReplicateOutcome {
    let failed = |e: &Error| ReplicateOutcome {
        rep,
        method,
        estimate: None,
        se: None,
        failure: Some(e.to_string()),
    };
    let sim = match sim {
        Ok(s) => s,
        Err(e) => return failed(e),
    };
    let estimate = match fit_replicate(sim, method) {
        Ok(e) => e,
        Err(e) => return failed(&e),
    };
    let (se, failure) = match b {
        None => (None, None),
        Some(b) => {
            let seed = bootstrap_seed(sim.config.seed, rep);
            match bootstrap(sim, |d: &SimulatedCohort| fit_replicate(d, method), b, seed) {
                Ok(res) => (Some(res.se), None),
                Err(e) => (None, Some(format!("bootstrap: {e}"))),
            }
        }
    };
    ReplicateOutcome {
        rep,
        method,
        estimate: Some(estimate),
        se,
        failure,
    }
}

fn summarize(config: &ScenarioConfig, methods: &[SimMethod], outcomes: &[ReplicateOutcome]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &method in methods {
        let mine: Vec<&ReplicateOutcome> = outcomes.iter().filter(|o| o.method == method).collect();
        let failures = mine.iter().filter(|o| o.estimate.is_none()).count();
        let truth = truth(config, method);
        for (j, name) in coefficient_names(method).into_iter().enumerate() {
            let est: Vec<f64> = mine.iter().filter_map(|o| o.estimate.as_ref().map(|e| e[j])).collect();
            let mean = est.iter().sum::<f64>() / est.len() as f64;
            let with_se: Vec<(f64, f64)> = mine
                .iter()
                .filter_map(|o| match (&o.estimate, &o.se) {
                    (Some(e), Some(s)) => Some((e[j], s[j])),
                    _ => None,
                })
                .collect();
            let (see, cp) = if with_se.is_empty() {
                (None, None)
            } else {
                let m = with_se.len() as f64;
                let see = with_se.iter().map(|(_, s)| s).sum::<f64>() / m;
                let covered = with_se
                    .iter()
                    .filter(|(e, s)| (e - truth[j]).abs() <= Z_975 * s)
                    .count() as f64;
                (Some(see), Some(covered / m))
            };
            let se = (est.len() >= 2).then(|| sample_sd(&est));
            rows.push(SummaryRow {
                scenario: config.name.clone(),
                method,
                coefficient: name.to_string(),
                truth: truth[j],
                mean,
                bias: mean - truth[j],
                se,
                see,
                cp,
                failures,
            });
        }
    }
    rows
}

/// Generates `config.reps` cohorts, fits every method to each, and
/// summarizes. Replicates run in parallel; the result does not depend on
/// the thread count.
pub fn run_scenario(config: &ScenarioConfig, methods: &[SimMethod], bootstrap_b: Option<usize>) -> Result<ScenarioRun> {
    config.validate()?;
    if methods.is_empty() {
        return Err(Error::InvalidConfig("at least one method is required".into()));
    }
    if methods.contains(&SimMethod::Disjoint) && !config.with_w {
        return Err(Error::InvalidConfig(
            "the disjoint method needs a scenario with the W covariate".into(),
        ));
    }
    if let Some(b) = bootstrap_b {
        if b < 2 {
            return Err(Error::InvalidConfig(format!(
                "bootstrap needs at least 2 replicates, got {b}"
            )));
        }
    }
    let mut seen = BTreeMap::new();
    for m in methods {
        if seen.insert(*m, ()).is_some() {
            return Err(Error::InvalidConfig(format!("method `{}` listed twice", m.as_str())));
        }
    }
    let replicates: Vec<ReplicateOutcome> = (0..config.reps)
        .into_par_iter()
        .flat_map_iter(|rep| {
            let sim = generate_cohort(config, rep);
            methods
                .iter()
                .map(|&m| run_one(&sim, rep, m, bootstrap_b))
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(ScenarioRun {
        config: config.clone(),
        rows: summarize(config, methods, &replicates),
        replicates,
    })
}

fn cell(v: Option<f64>) -> String {
    v.filter(|x| x.is_finite()).map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with columns scenario, method, coefficient, bias, se, see, cp, failures.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "method", "coefficient", "bias", "se", "see", "cp", "failures"])?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.method.as_str().to_string(),
            r.coefficient.clone(),
            cell(Some(r.bias)),
            cell(r.se),
            cell(r.see),
            cell(r.cp),
            r.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
