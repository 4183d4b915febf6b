use serde::{Deserialize, Serialize};

use super::{CovariateRegistry, CovariateSlot, Subject};
use crate::error::{Error, Result};

/// Value used by last-observed rules before any visit has recorded the covariate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Fill {
    Value(f64),
    /// Take the subject's own value of a baseline column (e.g. a covariate
    /// measured at the time origin).
    Baseline { baseline: String },
}

/// One component of the observed-history feature vector `X(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum HistoryRule {
    /// A baseline covariate.
    Baseline { name: String },
    /// 1 if the subject had any visit (either kind) before `t`.
    AnyPriorVisit,
    /// Baseline covariate times the any-prior-visit indicator.
    InteractBaselineWithAnyPrior { name: String },
    /// Most recent recorded value of a visit covariate before `t`.
    LastObserved { name: String, fill: Fill },
    /// Most recent value times the any-prior-visit indicator (0 before the first visit).
    InteractLastObservedWithAnyPrior { name: String },
    /// 1 if the most recent value exceeds `cutpoint`, 0 otherwise; `fill` before any record.
    ThresholdLastObserved { name: String, cutpoint: f64, fill: Fill },
}

/// Ordered rules mapping history strictly before `t` to `X(t)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HistoryFeatureSpec {
    pub rules: Vec<HistoryRule>,
}

impl HistoryFeatureSpec {
    pub fn new(rules: Vec<HistoryRule>) -> Self {
        Self { rules }
    }

    /// The null visit model: no features.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Resolves covariate names against a registry.
    pub fn bind(&self, registry: &CovariateRegistry) -> Result<HistoryFeatures> {
        let baseline = |name: &str| match registry.slot(name)? {
            CovariateSlot::Baseline(j) => Ok(j),
            CovariateSlot::Visit(_) => Err(Error::InvalidConfig(format!(
                "`{name}` is a visit covariate; this rule needs a baseline column"
            ))),
        };
        let visit = |name: &str| match registry.slot(name)? {
            CovariateSlot::Visit(j) => Ok(j),
            CovariateSlot::Baseline(_) => Err(Error::InvalidConfig(format!(
                "`{name}` is a baseline covariate; use a `baseline` rule instead"
            ))),
        };
        let fill = |f: &Fill| -> Result<BoundFill> {
            match f {
                Fill::Value(v) if v.is_finite() => Ok(BoundFill::Value(*v)),
                Fill::Value(v) => Err(Error::InvalidConfig(format!("fill value {v} is not finite"))),
                Fill::Baseline { baseline: b } => Ok(BoundFill::Baseline(baseline(b)?)),
            }
        };

        let mut rules = Vec::with_capacity(self.rules.len());
        let mut names = Vec::with_capacity(self.rules.len());
        for rule in &self.rules {
            let (bound, name) = match rule {
                HistoryRule::Baseline { name } => (BoundRule::Baseline(baseline(name)?), name.clone()),
                HistoryRule::AnyPriorVisit => (BoundRule::AnyPrior, "any_prior_visit".to_string()),
                HistoryRule::InteractBaselineWithAnyPrior { name } => (
                    BoundRule::InteractBaseline(baseline(name)?),
                    format!("any_prior_visit:{name}"),
                ),
                HistoryRule::LastObserved { name, fill: f } => (
                    BoundRule::LastObserved {
                        col: visit(name)?,
                        fill: fill(f)?,
                    },
                    format!("last({name})"),
                ),
                HistoryRule::InteractLastObservedWithAnyPrior { name } => (
                    BoundRule::InteractLast(visit(name)?),
                    format!("any_prior_visit:last({name})"),
                ),
                HistoryRule::ThresholdLastObserved {
                    name,
                    cutpoint,
                    fill: f,
                } => {
                    if !cutpoint.is_finite() {
                        return Err(Error::InvalidConfig(format!("cutpoint {cutpoint} is not finite")));
                    }
                    (
                        BoundRule::Threshold {
                            col: visit(name)?,
                            cutpoint: *cutpoint,
                            fill: fill(f)?,
                        },
                        format!("last({name})>{cutpoint}"),
                    )
                }
            };
            rules.push(bound);
            names.push(name);
        }
        Ok(HistoryFeatures {
            rules,
            names,
            visit_columns: registry.visit.len(),
        })
    }
}

#[derive(Clone, Debug)]
enum BoundFill {
    Value(f64),
    Baseline(usize),
}

impl BoundFill {
    fn value(&self, subject: &Subject) -> f64 {
        match *self {
            BoundFill::Value(v) => v,
            BoundFill::Baseline(j) => subject.baseline.values()[j],
        }
    }
}

#[derive(Clone, Debug)]
enum BoundRule {
    Baseline(usize),
    AnyPrior,
    InteractBaseline(usize),
    LastObserved { col: usize, fill: BoundFill },
    InteractLast(usize),
    Threshold { col: usize, cutpoint: f64, fill: BoundFill },
}

/// History state after some prefix of a subject's visits.
struct HistoryState {
    any_prior: bool,
    /// Last recorded value per visit column, NaN when none yet.
    last: Vec<f64>,
}

impl HistoryState {
    fn new(columns: usize) -> Self {
        Self {
            any_prior: false,
            last: vec![f64::NAN; columns],
        }
    }

    fn absorb(&mut self, values: &[f64]) {
        self.any_prior = true;
        for (slot, &v) in self.last.iter_mut().zip(values) {
            if !v.is_nan() {
                *slot = v;
            }
        }
    }
}

/// A [`HistoryFeatureSpec`] bound to a covariate registry.
#[derive(Clone, Debug)]
pub struct HistoryFeatures {
    rules: Vec<BoundRule>,
    names: Vec<String>,
    visit_columns: usize,
}

impl HistoryFeatures {
    /// Dimension `q` of `X(t)`.
    pub fn dim(&self) -> usize {
        self.rules.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// `X(t)` from visits strictly before `t`. Entries are NaN when a rule
    /// without a fill has nothing recorded to read.
    pub fn evaluate(&self, subject: &Subject, t: f64) -> Vec<f64> {
        let mut state = HistoryState::new(self.visit_columns);
        for visit in &subject.visits[..subject.visits_before(t)] {
            state.absorb(visit.covariates.values());
        }
        let mut out = vec![0.0; self.dim()];
        self.write(subject, &state, &mut out);
        out
    }

    /// `X` on each inter-visit segment: row `k` (of `visits.len() + 1`) is the
    /// value for `t` with exactly `k` visits strictly before it. Flat, row-major.
    pub fn segments(&self, subject: &Subject) -> Vec<f64> {
        let q = self.dim();
        let mut out = vec![0.0; (subject.visits.len() + 1) * q];
        let mut state = HistoryState::new(self.visit_columns);
        self.write(subject, &state, &mut out[..q]);
        for (k, visit) in subject.visits.iter().enumerate() {
            state.absorb(visit.covariates.values());
            self.write(subject, &state, &mut out[(k + 1) * q..(k + 2) * q]);
        }
        out
    }

    fn write(&self, subject: &Subject, state: &HistoryState, out: &mut [f64]) {
        let indicator = if state.any_prior { 1.0 } else { 0.0 };
        for (rule, slot) in self.rules.iter().zip(out.iter_mut()) {
            *slot = match rule {
                BoundRule::Baseline(j) => subject.baseline.values()[*j],
                BoundRule::AnyPrior => indicator,
                BoundRule::InteractBaseline(j) => indicator * subject.baseline.values()[*j],
                BoundRule::LastObserved { col, fill } => {
                    let v = state.last[*col];
                    if v.is_nan() {
                        fill.value(subject)
                    } else {
                        v
                    }
                }
                BoundRule::InteractLast(col) => {
                    if state.any_prior {
                        state.last[*col]
                    } else {
                        0.0
                    }
                }
                BoundRule::Threshold { col, cutpoint, fill } => {
                    let v = state.last[*col];
                    if v.is_nan() {
                        fill.value(subject)
                    } else if v > *cutpoint {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
        }
    }
}

/// `X(t)` for one subject.
pub fn history_features(
    registry: &CovariateRegistry,
    subject: &Subject,
    spec: &HistoryFeatureSpec,
    t: f64,
) -> Result<Vec<f64>> {
    Ok(spec.bind(registry)?.evaluate(subject, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{Visit, VisitKind};

    fn registry() -> CovariateRegistry {
        CovariateRegistry::new(vec!["Z1".into()], vec!["Z2".into()]).unwrap()
    }

    fn subject() -> Subject {
        Subject {
            id: "a".into(),
            censor_time: 3.0,
            baseline: vec![0.4].into(),
            visits: vec![
                Visit {
                    time: 1.0,
                    kind: VisitKind::Nonevent,
                    covariates: vec![1.0].into(),
                },
                Visit {
                    time: 2.0,
                    kind: VisitKind::Event,
                    covariates: vec![0.0].into(),
                },
            ],
        }
    }

    #[test]
    fn last_observed_with_fill() {
        let spec = HistoryFeatureSpec::new(vec![HistoryRule::LastObserved {
            name: "Z2".into(),
            fill: Fill::Value(0.0),
        }]);
        let s = subject();
        let at = |t| history_features(&registry(), &s, &spec, t).unwrap();
        assert_eq!(at(0.5), vec![0.0]);
        assert_eq!(at(1.0), vec![0.0]);
        assert_eq!(at(1.5), vec![1.0]);
        assert_eq!(at(2.5), vec![0.0]);
    }

    #[test]
    fn indicator_and_interaction() {
        let spec = HistoryFeatureSpec::new(vec![
            HistoryRule::AnyPriorVisit,
            HistoryRule::InteractBaselineWithAnyPrior { name: "Z1".into() },
        ]);
        let s = subject();
        assert_eq!(history_features(&registry(), &s, &spec, 1.5).unwrap(), vec![1.0, 0.4]);
        assert_eq!(history_features(&registry(), &s, &spec, 0.5).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn threshold_and_baseline_fill() {
        let registry =
            CovariateRegistry::new(vec!["Z1".into(), "Z2_0".into()], vec!["Z2".into()]).unwrap();
        let mut s = subject();
        s.baseline = vec![0.4, 7.0].into();
        let spec = HistoryFeatureSpec::new(vec![
            HistoryRule::ThresholdLastObserved {
                name: "Z2".into(),
                cutpoint: 0.5,
                fill: Fill::Value(-1.0),
            },
            HistoryRule::LastObserved {
                name: "Z2".into(),
                fill: Fill::Baseline {
                    baseline: "Z2_0".into(),
                },
            },
        ]);
        let at = |t| history_features(&registry, &s, &spec, t).unwrap();
        assert_eq!(at(0.5), vec![-1.0, 7.0]);
        assert_eq!(at(1.5), vec![1.0, 1.0]);
        assert_eq!(at(2.5), vec![0.0, 0.0]);
    }

    #[test]
    fn missing_values_are_skipped_by_last_observed() {
        let mut s = subject();
        s.visits[1].covariates = vec![f64::NAN].into();
        let spec = HistoryFeatureSpec::new(vec![
            HistoryRule::LastObserved {
                name: "Z2".into(),
                fill: Fill::Value(0.0),
            },
            HistoryRule::InteractLastObservedWithAnyPrior { name: "Z2".into() },
        ]);
        assert_eq!(history_features(&registry(), &s, &spec, 2.5).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn unknown_or_misplaced_names_fail_to_bind() {
        let bad = HistoryFeatureSpec::new(vec![HistoryRule::Baseline { name: "Z9".into() }]);
        assert!(matches!(bad.bind(&registry()), Err(Error::UnknownCovariate(_))));
        let wrong = HistoryFeatureSpec::new(vec![HistoryRule::Baseline { name: "Z2".into() }]);
        assert!(matches!(wrong.bind(&registry()), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn segments_match_pointwise_evaluation() {
        let spec = HistoryFeatureSpec::new(vec![
            HistoryRule::AnyPriorVisit,
            HistoryRule::LastObserved {
                name: "Z2".into(),
                fill: Fill::Value(0.5),
            },
        ]);
        let s = subject();
        let bound = spec.bind(&registry()).unwrap();
        let seg = bound.segments(&s);
        for t in [0.3, 1.0, 1.2, 2.0, 2.7] {
            let k = s.visits_before(t);
            assert_eq!(&seg[k * 2..k * 2 + 2], bound.evaluate(&s, t).as_slice());
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = HistoryFeatureSpec::new(vec![
            HistoryRule::Baseline { name: "Z1".into() },
            HistoryRule::LastObserved {
                name: "Z2".into(),
                fill: Fill::Baseline {
                    baseline: "Z2_0".into(),
                },
            },
            HistoryRule::ThresholdLastObserved {
                name: "Z2".into(),
                cutpoint: 1.5,
                fill: Fill::Value(0.0),
            },
        ]);
        let json = serde_json::to_string(&spec).unwrap();
        let back: HistoryFeatureSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
