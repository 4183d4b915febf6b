use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma};

use super::ScenarioConfig;
use crate::cohort::{Cohort, CovariateRegistry, Fill, HistoryFeatureSpec, HistoryRule, Subject, Visit, VisitKind};
use crate::error::{Error, Result};
use crate::inference::Resample;

/// A 0/1 process that flips state at each switch time.
#[derive(Clone, Debug, PartialEq)]
pub struct RenewalPath {
    pub initial: bool,
    pub rate: f64,
    /// Increasing switch times, up to the first one past censoring.
    pub switches: Vec<f64>,
}

impl RenewalPath {
    fn sample(rng: &mut ChaCha8Rng, frailty: &Frailty, horizon: f64) -> Self {
        let rate = frailty.sample(rng);
        let initial = rng.random_bool(0.5);
        let sojourn = Exp::new(rate).expect("positive renewal rate");
        let mut switches = Vec::new();
        let mut t = 0.0;
        loop {
            t += sojourn.sample(rng);
            switches.push(t);
            if t > horizon {
                break;
            }
        }
        Self {
            initial,
            rate,
            switches,
        }
    }

    /// Right-continuous state at `t`.
    pub fn at(&self, t: f64) -> f64 {
        let flips = self.switches.partition_point(|&s| s <= t);
        if self.initial ^ (flips % 2 == 1) {
            1.0
        } else {
            0.0
        }
    }
}

/// Everything needed to evaluate a subject's covariate paths exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectTruth {
    pub z1: f64,
    pub z2: RenewalPath,
    pub phase_z3: f64,
    pub phase_latent: f64,
    pub w: Option<RenewalPath>,
}

impl SubjectTruth {
    pub fn z(&self, t: f64) -> [f64; 3] {
        [self.z1, self.z2.at(t), (PI * t + self.phase_z3).sin()]
    }

    pub fn latent(&self, t: f64) -> f64 {
        (PI * t + self.phase_latent).sin()
    }

    pub fn w(&self, t: f64) -> Option<f64> {
        self.w.as_ref().map(|w| w.at(t))
    }
}

/// Observed cohort plus the generating paths.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedCohort {
    pub cohort: Cohort,
    pub truth: Vec<SubjectTruth>,
    pub config: ScenarioConfig,
}

impl SimulatedCohort {
    /// Names of the event covariates, in coefficient order.
    pub fn event_covariate_names(&self) -> Vec<String> {
        vec!["Z1".into(), "Z2".into(), "Z3".into()]
    }

    /// Visit-model covariates for the disjoint design.
    pub fn visit_covariate_names(&self) -> Vec<String> {
        vec!["W".into()]
    }

    /// `X(t) = (Z1, X2(t), X3(t))` with the time-zero values before the
    /// first visit.
    pub fn history_spec() -> HistoryFeatureSpec {
        HistoryFeatureSpec::new(vec![
            HistoryRule::Baseline { name: "Z1".into() },
            HistoryRule::LastObserved {
                name: "Z2".into(),
                fill: Fill::Baseline {
                    baseline: "Z2_0".into(),
                },
            },
            HistoryRule::LastObserved {
                name: "Z3".into(),
                fill: Fill::Baseline {
                    baseline: "Z3_0".into(),
                },
            },
        ])
    }

    /// True `Z(t)` of subject `i`.
    pub fn true_covariates(&self, i: usize, t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.truth[i].z(t));
    }
}

impl Resample for SimulatedCohort {
    fn subject_count(&self) -> usize {
        self.cohort.n()
    }

    fn resample(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            cohort: self.cohort.resample(indices)?,
            truth: indices.iter().map(|&i| self.truth[i].clone()).collect(),
            config: self.config.clone(),
        })
    }
}

enum Frailty {
    Fixed(f64),
    Gamma(Gamma<f64>),
}

impl Frailty {
    fn new(mean: f64, variance: f64) -> Self {
        if variance == 0.0 {
            Frailty::Fixed(mean)
        } else {
            let shape = mean * mean / variance;
            Frailty::Gamma(Gamma::new(shape, variance / mean).expect("valid gamma parameters"))
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Frailty::Fixed(v) => *v,
            Frailty::Gamma(g) => g.sample(rng),
        }
    }
}

/// Points of a Poisson process with rate `intensity` on `(0, horizon]`, by
/// thinning a homogeneous process of rate `bound`.
pub fn thinning_sample<R: Rng + ?Sized>(
    mut intensity: impl FnMut(f64) -> f64,
    bound: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    if !(bound > 0.0) {
        return Ok(out);
    }
    let mut t = 0.0;
    loop {
        let u: f64 = rng.random();
        t += -(1.0 - u).ln() / bound;
        if t > horizon {
            return Ok(out);
        }
        let lambda = intensity(t);
        if lambda > bound * (1.0 + 1e-12) {
            return Err(Error::BoundViolation {
                time: t,
                intensity: lambda,
                bound,
            });
        }
        if rng.random::<f64>() * bound < lambda {
            out.push(t);
        }
    }
}

/// Largest value of `coef * v` over `v` in `[lo, hi]`.
fn term_max(coef: f64, lo: f64, hi: f64) -> f64 {
    (coef * lo).max(coef * hi)
}

fn event_exponent_bound(c: &ScenarioConfig) -> f64 {
    term_max(c.beta_b, -0.5, 0.5)
        + term_max(c.beta_t1, 0.0, 1.0)
        + term_max(c.beta_t2, -1.0, 1.0)
        + term_max(c.gamma1, -1.0, 1.0)
        - 1.0
}

fn visit_exponent_bound(c: &ScenarioConfig) -> f64 {
    let w = if c.with_w { term_max(c.alpha_w, 0.0, 1.0) } else { 0.0 };
    term_max(c.alpha1, -0.5, 0.5)
        + term_max(c.alpha2, 0.0, 1.0)
        + term_max(c.alpha3, -1.0, 1.0)
        + term_max(c.alpha4, 0.0, 1.0)
        + term_max(c.alpha5, -1.0, 1.0)
        + term_max(c.gamma2, -1.0, 1.0)
        + w
}

fn registry(with_w: bool) -> CovariateRegistry {
    let mut visit = vec!["Z2".to_string(), "Z3".to_string()];
    if with_w {
        visit.push("W".into());
    }
    CovariateRegistry::new(vec!["Z1".into(), "Z2_0".into(), "Z3_0".into()], visit)
        .expect("fixed registry is valid")
}

fn simulate_subject(
    config: &ScenarioConfig,
    frailty: &Frailty,
    rng: &mut ChaCha8Rng,
    index: usize,
) -> Result<(Subject, SubjectTruth)> {
    let censor: f64 = (1.0 - rng.random::<f64>()) * config.censor_max;
    let truth = SubjectTruth {
        z1: rng.random::<f64>() - 0.5,
        z2: RenewalPath::sample(rng, frailty, censor),
        phase_z3: rng.random::<f64>() * 2.0 * PI,
        phase_latent: rng.random::<f64>() * 2.0 * PI,
        w: if config.with_w {
            Some(RenewalPath::sample(rng, frailty, censor))
        } else {
            None
        },
    };
    let z0 = truth.z(0.0);
    let event_bound = censor * event_exponent_bound(config).exp();
    let visit_bound = visit_exponent_bound(config).exp();
    let bound = event_bound + visit_bound;

    // Last recorded (Z2, Z3); time-zero values before the first visit.
    let mut last = [z0[1], z0[2]];
    let mut visits = Vec::new();
    let mut t = 0.0;
    loop {
        let u: f64 = rng.random();
        t += -(1.0 - u).ln() / bound;
        if t > censor {
            break;
        }
        let z = truth.z(t);
        let l = truth.latent(t);
        let event_rate = t
            * (config.beta_b * z[0] + config.beta_t1 * z[1] + config.beta_t2 * z[2]
                + config.gamma1 * l
                - 1.0)
                .exp();
        let visit_rate = (config.alpha1 * z[0]
            + config.alpha2 * last[0]
            + config.alpha3 * last[1]
            + config.alpha4 * z[1]
            + config.alpha5 * z[2]
            + config.gamma2 * l
            + truth.w(t).map_or(0.0, |w| config.alpha_w * w))
        .exp();
        if event_rate + visit_rate > bound * (1.0 + 1e-12) {
            return Err(Error::BoundViolation {
                time: t,
                intensity: event_rate + visit_rate,
                bound,
            });
        }
        let draw = rng.random::<f64>() * bound;
        let kind = if draw < event_rate {
            VisitKind::Event
        } else if draw < event_rate + visit_rate {
            VisitKind::Nonevent
        } else {
            continue;
        };
        let mut covariates = vec![z[1], z[2]];
        covariates.extend(truth.w(t));
        visits.push(Visit {
            time: t,
            kind,
            covariates: covariates.into(),
        });
        last = [z[1], z[2]];
    }
    let subject = Subject {
        id: format!("s{index}"),
        censor_time: censor,
        baseline: vec![z0[0], z0[1], z0[2]].into(),
        visits,
    };
    Ok((subject, truth))
}

/// Cohort for replicate `rep`; a pure function of `(config, rep)`.
pub fn generate_cohort(config: &ScenarioConfig, rep: usize) -> Result<SimulatedCohort> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(rep as u64);
    let frailty = Frailty::new(config.frailty_mean, config.frailty_variance);
    let mut subjects = Vec::with_capacity(config.n);
    let mut truth = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let (s, t) = simulate_subject(config, &frailty, &mut rng, i)?;
        subjects.push(s);
        truth.push(t);
    }
    let max_censor = subjects
        .iter()
        .map(|s| s.censor_time)
        .fold(f64::NEG_INFINITY, f64::max);
    let tau = config.tau.map_or(max_censor, |t| t.min(max_censor));
    let cohort = Cohort::new(subjects, registry(config.with_w), Some(tau))?;
    Ok(SimulatedCohort {
        cohort,
        truth,
        config: config.clone(),
    })
}
