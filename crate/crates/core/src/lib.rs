//! Semiparametric estimation of proportional rate models for recurrent
//! events whose time-dependent covariates are seen only at clinical visits,
//! when the visit process itself may depend on the patient's history.
//!
//! The main estimator is a two-step procedure: fit a multiplicative model
//! for the non-event visit process ([`visitfit`]), then estimate the event
//! rate coefficients by kernel smoothing over non-event visits weighted by
//! the inverse fitted visit rate ([`eventfit::fit_proposed`]). Comparators
//! (unweighted kernel smoothing, LOCF and a full-data oracle), a joint
//! estimator for visit processes driven by current covariates
//! ([`vnarfit`]), a subject-level bootstrap ([`inference`]) and a simulation
//! laboratory ([`simlab`]) are included.

pub mod cli;
pub mod cohort;
pub mod error;
pub mod eventfit;
pub mod inference;
pub mod simlab;
pub mod smoothing;
pub mod solver;
pub mod visitfit;
pub mod vnarfit;

pub use cohort::{Cohort, CovariateRegistry, HistoryFeatureSpec, HistoryRule, Subject, Visit, VisitKind};
pub use error::{Error, Result};
pub use eventfit::{fit_full_oracle, fit_locf, fit_ppl, fit_proposed, RateMethod, RateModelFit};
pub use inference::{bootstrap, BootstrapResult};
pub use simlab::{generate_cohort, run_scenario, scenario_preset, ScenarioConfig, SimMethod, SimulatedCohort};
pub use smoothing::{Bandwidth, KernelConfig};
pub use solver::SolverConfig;
pub use visitfit::{fit_visit_model, VisitModelFit};
pub use vnarfit::{fit_disjoint, DisjointFit, DisjointPartition};
