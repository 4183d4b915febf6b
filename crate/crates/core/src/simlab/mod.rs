//! Simulation laboratory: data-generating processes, scenario presets and
//! replicated experiments.
//!
//! Each subject carries
//! - `Z1 ~ U[-0.5, 0.5]`, fixed over time;
//! - `Z2(t)`, a 0/1 renewal process with exponential sojourns at a
//!   subject-specific rate `xi ~ Gamma` and `P(Z2(0) = 1) = 0.5`;
//! - `Z3(t) = sin(pi t + w1)` and a latent `L(t) = sin(pi t + w2)`.
//!
//! Events occur at rate `t exp(bB Z1 + bT1 Z2 + bT2 Z3 + g1 L - 1)` and
//! non-event visits at rate
//! `exp(a1 Z1 + a2 X2 + a3 X3 + a4 Z2 + a5 Z3 + g2 L)`, where `X2`, `X3`
//! are the values recorded at the most recent visit of either kind (the
//! time-zero values before any visit). Both processes are simulated jointly
//! by thinning, so every accepted visit refreshes the observed history.

mod generate;
mod run;

pub use generate::{generate_cohort, thinning_sample, RenewalPath, SimulatedCohort, SubjectTruth};
pub use run::{
    coefficient_names, fit_replicate, run_scenario, write_summary_csv, ReplicateOutcome, ScenarioRun,
    SimMethod, SummaryRow,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smoothing::KernelConfig;
use crate::solver::SolverConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub name: String,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub alpha5: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub beta_b: f64,
    pub beta_t1: f64,
    pub beta_t2: f64,
    /// Adds an independent renewal covariate `W`, recorded at every visit,
    /// entering the visit rate as `alpha_w W(t)`.
    pub with_w: bool,
    pub alpha_w: f64,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub kernel: KernelConfig,
    pub solver: SolverConfig,
    pub censor_max: f64,
    pub frailty_mean: f64,
    pub frailty_variance: f64,
    /// Score horizon; capped at the largest censoring time of each cohort.
    pub tau: Option<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "I".into(),
            alpha1: 0.0,
            alpha2: 0.0,
            alpha3: 0.0,
            alpha4: 0.0,
            alpha5: 0.0,
            gamma1: 0.0,
            gamma2: 0.0,
            beta_b: -1.0,
            beta_t1: -1.0,
            beta_t2: 1.0,
            with_w: false,
            alpha_w: 0.0,
            n: 200,
            reps: 200,
            seed: 1,
            kernel: KernelConfig::default(),
            solver: SolverConfig::default(),
            censor_max: 5.0,
            frailty_mean: 1.0,
            frailty_variance: 0.2,
            tau: Some(5.0),
        }
    }
}

pub const SCENARIO_NAMES: [&str; 12] = [
    "I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "GammaShift", "Disjoint",
];

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.reps < 1 {
            return bad("reps must be at least 1".into());
        }
        if !(self.censor_max > 0.0 && self.censor_max.is_finite()) {
            return bad(format!("censor_max must be positive, got {}", self.censor_max));
        }
        if !(self.frailty_mean > 0.0 && self.frailty_mean.is_finite()) {
            return bad(format!("frailty_mean must be positive, got {}", self.frailty_mean));
        }
        if !(self.frailty_variance >= 0.0 && self.frailty_variance.is_finite()) {
            return bad(format!(
                "frailty_variance must be nonnegative, got {}",
                self.frailty_variance
            ));
        }
        if let Some(tau) = self.tau {
            if !(tau > 0.0) {
                return bad(format!("tau must be positive, got {tau}"));
            }
        }
        let coefs = [
            self.alpha1, self.alpha2, self.alpha3, self.alpha4, self.alpha5, self.gamma1,
            self.gamma2, self.beta_b, self.beta_t1, self.beta_t2, self.alpha_w,
        ];
        if coefs.iter().any(|c| !c.is_finite()) {
            return bad("model coefficients must be finite".into());
        }
        self.kernel.validate()?;
        self.solver.validate()
    }

    /// True event coefficients `(beta_B, beta_T1, beta_T2)`.
    pub fn beta(&self) -> [f64; 3] {
        [self.beta_b, self.beta_t1, self.beta_t2]
    }

    /// Coefficients of `X(t) = (Z1, X2(t), X3(t))` in the visit rate.
    pub fn alpha_history(&self) -> [f64; 3] {
        [self.alpha1, self.alpha2, self.alpha3]
    }
}

/// Parameter set for a named scenario, with the remaining settings at their
/// defaults.
pub fn scenario_preset(name: &str) -> Result<ScenarioConfig> {
    let base = ScenarioConfig::default();
    let mut c = ScenarioConfig {
        name: name.to_string(),
        ..base
    };
    let set_alpha = |c: &mut ScenarioConfig, a: [f64; 5]| {
        c.alpha1 = a[0];
        c.alpha2 = a[1];
        c.alpha3 = a[2];
        c.alpha4 = a[3];
        c.alpha5 = a[4];
    };
    match name {
        "I" => {}
        "II" => set_alpha(&mut c, [-0.5, -0.5, 0.5, 0.0, 0.0]),
        "III" => set_alpha(&mut c, [-1.0, -1.0, 1.0, 0.0, 0.0]),
        "IV" => {
            c.gamma1 = 1.0;
            c.gamma2 = 1.0;
        }
        "V" => {
            set_alpha(&mut c, [-0.5, -0.5, 0.5, 0.0, 0.0]);
            c.gamma1 = 1.0;
            c.gamma2 = 1.0;
        }
        "VI" => {
            set_alpha(&mut c, [-1.0, -1.0, 1.0, 0.0, 0.0]);
            c.gamma1 = 1.0;
            c.gamma2 = 1.0;
        }
        "VII" | "VIII" | "IX" | "X" => {
            let a = match name {
                "VII" => [-1.0, -1.0, 0.5, 0.0, 0.5],
                "VIII" => [-1.0, -0.5, 1.0, -0.5, 0.0],
                "IX" => [-1.0, -0.5, 0.5, -0.5, 0.5],
                _ => [-1.0, 0.0, 0.0, -0.5, 0.5],
            };
            set_alpha(&mut c, a);
            c.gamma1 = 1.0;
            c.gamma2 = 1.0;
        }
        // Visit rate exp(0.5 Z1 + 0.5 Z2(t) + 0.5 Z3(t)) depends on current
        // covariates only.
        "GammaShift" => set_alpha(&mut c, [0.5, 0.0, 0.0, 0.5, 0.5]),
        // Visit rate exp(-0.5 W(t)) with W independent of the event covariates.
        "Disjoint" => {
            c.with_w = true;
            c.alpha_w = -0.5;
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown scenario `{other}`; expected one of {}",
                SCENARIO_NAMES.join(", ")
            )))
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_their_definitions() {
        let i = scenario_preset("I").unwrap();
        assert_eq!(
            [i.alpha1, i.alpha2, i.alpha3, i.alpha4, i.alpha5, i.gamma1, i.gamma2],
            [0.0; 7]
        );
        let ii = scenario_preset("II").unwrap();
        assert_eq!(
            [ii.alpha1, ii.alpha2, ii.alpha3, ii.alpha4, ii.alpha5, ii.gamma1, ii.gamma2],
            [-0.5, -0.5, 0.5, 0.0, 0.0, 0.0, 0.0]
        );
        let ix = scenario_preset("IX").unwrap();
        assert_eq!([ix.alpha2, ix.alpha4, ix.alpha3, ix.alpha5], [-0.5, -0.5, 0.5, 0.5]);
        for name in ["VII", "VIII", "IX", "X"] {
            let c = scenario_preset(name).unwrap();
            assert_eq!([c.alpha1, c.gamma1, c.gamma2], [-1.0, 1.0, 1.0]);
        }
        assert_eq!(ii.beta(), [-1.0, -1.0, 1.0]);
        for name in SCENARIO_NAMES {
            scenario_preset(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn unknown_preset_and_bad_configs() {
        assert!(matches!(scenario_preset("XI"), Err(Error::InvalidConfig(_))));
        let base = ScenarioConfig::default();
        for bad in [
            ScenarioConfig { n: 1, ..base.clone() },
            ScenarioConfig { reps: 0, ..base.clone() },
            ScenarioConfig { censor_max: 0.0, ..base.clone() },
            ScenarioConfig { frailty_variance: -1.0, ..base.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn config_json_round_trip() {
        let c = scenario_preset("Disjoint").unwrap();
        let back: ScenarioConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
        let partial: ScenarioConfig = serde_json::from_str(r#"{"alpha1": -0.5, "n": 50}"#).unwrap();
        assert_eq!(partial.n, 50);
        assert_eq!(partial.beta_t2, 1.0);
    }
}
