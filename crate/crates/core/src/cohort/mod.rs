//! Visit-level recurrent-event data.
//!
//! A [`Cohort`] holds one [`Subject`] per individual: a censoring time,
//! baseline covariates and a time-ordered list of visits. Each visit is
//! either an *event* visit (a jump of the event counting process) or a
//! *non-event* visit (a jump of the observation process), and carries a
//! snapshot of the time-dependent covariates taken at that visit.
//!
//! History is always read strictly before the query time: a visit at exactly
//! `t` never informs quantities evaluated at `t`.

mod history;
mod io;

pub use history::{history_features, Fill, HistoryFeatureSpec, HistoryFeatures, HistoryRule};
pub use io::{load_cohort, load_cohort_files, write_cohort, write_cohort_files};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Names of the covariate columns, split by where their values live.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateRegistry {
    /// Time-fixed columns stored once per subject.
    pub baseline: Vec<String>,
    /// Columns recorded at every visit.
    pub visit: Vec<String>,
}

/// Location of a named covariate inside a subject record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CovariateSlot {
    Baseline(usize),
    Visit(usize),
}

impl CovariateRegistry {
    pub fn new(baseline: Vec<String>, visit: Vec<String>) -> Result<Self> {
        let registry = Self { baseline, visit };
        registry.validate()?;
        Ok(registry)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for name in self.baseline.iter().chain(&self.visit) {
            if name.is_empty() {
                return Err(Error::SchemaMismatch("empty covariate name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::SchemaMismatch(format!(
                    "covariate `{name}` appears more than once across the subjects and visits files"
                )));
            }
        }
        Ok(())
    }

    pub fn slot(&self, name: &str) -> Result<CovariateSlot> {
        if let Some(i) = self.baseline.iter().position(|n| n == name) {
            return Ok(CovariateSlot::Baseline(i));
        }
        if let Some(i) = self.visit.iter().position(|n| n == name) {
            return Ok(CovariateSlot::Visit(i));
        }
        Err(Error::UnknownCovariate(name.to_string()))
    }

    pub fn slots(&self, names: &[String]) -> Result<Vec<CovariateSlot>> {
        names.iter().map(|n| self.slot(n)).collect()
    }

    pub fn len(&self) -> usize {
        self.baseline.len() + self.visit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered covariate values. A NaN entry marks a value that was not recorded.
#[derive(Clone, Debug, Default)]
pub struct CovariateVector(Vec<f64>);

impl CovariateVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    /// `None` when the value is missing.
    pub fn get(&self, i: usize) -> Option<f64> {
        self.0.get(i).copied().filter(|v| !v.is_nan())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl PartialEq for CovariateVector {
    fn eq(&self, other: &Self) -> bool {
        self.0.len() == other.0.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(a, b)| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()))
    }
}

impl From<Vec<f64>> for CovariateVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisitKind {
    Event,
    Nonevent,
}

impl VisitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VisitKind::Event => "event",
            VisitKind::Nonevent => "nonevent",
        }
    }

    pub fn swapped(self) -> Self {
        match self {
            VisitKind::Event => VisitKind::Nonevent,
            VisitKind::Nonevent => VisitKind::Event,
        }
    }
}

impl std::str::FromStr for VisitKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "event" => Ok(VisitKind::Event),
            "nonevent" => Ok(VisitKind::Nonevent),
            other => Err(format!("visit kind must be `event` or `nonevent`, got `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Visit {
    pub time: f64,
    pub kind: VisitKind,
    pub covariates: CovariateVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subject {
    pub id: String,
    pub censor_time: f64,
    pub baseline: CovariateVector,
    /// Sorted by time; an event and a non-event visit may share a timestamp.
    pub visits: Vec<Visit>,
}

impl Subject {
    /// Value of a covariate at one of this subject's visits (NaN when missing).
    pub fn value_at_visit(&self, slot: CovariateSlot, visit: usize) -> f64 {
        match slot {
            CovariateSlot::Baseline(j) => self.baseline.values()[j],
            CovariateSlot::Visit(j) => self.visits[visit].covariates.values()[j],
        }
    }

    /// Number of visits with time strictly before `t`.
    pub fn visits_before(&self, t: f64) -> usize {
        self.visits.partition_point(|v| v.time < t)
    }

    fn sort_visits(&mut self) {
        self.visits
            .sort_by(|a, b| a.time.total_cmp(&b.time).then(a.kind.cmp(&b.kind)));
    }
}

/// Counts and last observation strictly before a time point.
#[derive(Clone, Debug, PartialEq)]
pub struct CountingState<'a> {
    pub events_before: usize,
    pub nonevents_before: usize,
    pub last_observed: Option<(f64, &'a CovariateVector)>,
}

/// `N*(t-)`, `O*(t-)` and the most recent covariate snapshot before `t`.
pub fn counting_state(subject: &Subject, t: f64) -> CountingState<'_> {
    let prior = &subject.visits[..subject.visits_before(t)];
    let events_before = prior.iter().filter(|v| v.kind == VisitKind::Event).count();
    CountingState {
        events_before,
        nonevents_before: prior.len() - events_before,
        last_observed: prior.last().map(|v| (v.time, &v.covariates)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    subjects: Vec<Subject>,
    registry: CovariateRegistry,
    tau: f64,
}

impl Cohort {
    /// Validates the subjects and sorts their visits. `tau` defaults to the
    /// largest censoring time.
    pub fn new(
        mut subjects: Vec<Subject>,
        registry: CovariateRegistry,
        tau: Option<f64>,
    ) -> Result<Self> {
        registry.validate()?;
        if subjects.len() < 2 {
            return Err(Error::InvalidCohort(format!(
                "at least two subjects are required, got {}",
                subjects.len()
            )));
        }
        for subject in &mut subjects {
            if !(subject.censor_time.is_finite() && subject.censor_time > 0.0) {
                return Err(Error::InvalidCohort(format!(
                    "subject {}: censoring time must be positive and finite",
                    subject.id
                )));
            }
            if subject.baseline.len() != registry.baseline.len() {
                return Err(Error::SchemaMismatch(format!(
                    "subject {} has {} baseline values, registry has {}",
                    subject.id,
                    subject.baseline.len(),
                    registry.baseline.len()
                )));
            }
            if let Some(j) = subject.baseline.values().iter().position(|v| !v.is_finite()) {
                return Err(Error::MissingCovariate {
                    subject: subject.id.clone(),
                    name: registry.baseline[j].clone(),
                    time: 0.0,
                });
            }
            subject.sort_visits();
            for (k, visit) in subject.visits.iter().enumerate() {
                if visit.covariates.len() != registry.visit.len() {
                    return Err(Error::SchemaMismatch(format!(
                        "subject {}: visit at {} has {} covariates, registry has {}",
                        subject.id,
                        visit.time,
                        visit.covariates.len(),
                        registry.visit.len()
                    )));
                }
                if !(visit.time.is_finite() && visit.time > 0.0) {
                    return Err(Error::InvalidCohort(format!(
                        "subject {}: visit times must be positive, got {}",
                        subject.id, visit.time
                    )));
                }
                if visit.time > subject.censor_time {
                    return Err(Error::VisitAfterCensoring {
                        subject: subject.id.clone(),
                        time: visit.time,
                        censor_time: subject.censor_time,
                        line: 0,
                    });
                }
                if visit.covariates.values().iter().any(|v| v.is_infinite()) {
                    return Err(Error::InvalidCohort(format!(
                        "subject {}: non-finite covariate at time {}",
                        subject.id, visit.time
                    )));
                }
                if k > 0 {
                    let prev = &subject.visits[k - 1];
                    if prev.time == visit.time && prev.kind == visit.kind {
                        return Err(Error::DuplicateVisit {
                            subject: subject.id.clone(),
                            time: visit.time,
                            kind: visit.kind.as_str().to_string(),
                        });
                    }
                }
            }
        }
        let max_censor = subjects
            .iter()
            .map(|s| s.censor_time)
            .fold(f64::NEG_INFINITY, f64::max);
        let tau = tau.unwrap_or(max_censor);
        if !(tau > 0.0 && tau <= max_censor) {
            return Err(Error::InvalidCohort(format!(
                "tau must lie in (0, {max_censor}] (the largest censoring time), got {tau}"
            )));
        }
        Ok(Self {
            subjects,
            registry,
            tau,
        })
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn registry(&self) -> &CovariateRegistry {
        &self.registry
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    pub fn max_censor_time(&self) -> f64 {
        self.subjects
            .iter()
            .map(|s| s.censor_time)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Same data with a different score horizon.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Cohort::new(self.subjects.clone(), self.registry.clone(), Some(tau))
    }

    /// Subjects drawn by index (repeats allowed). The horizon is kept, or
    /// lowered to the largest censoring time among the drawn subjects.
    pub fn resample(&self, indices: &[usize]) -> Result<Self> {
        let subjects: Vec<Subject> = indices.iter().map(|&i| self.subjects[i].clone()).collect();
        let max_censor = subjects
            .iter()
            .map(|s| s.censor_time)
            .fold(f64::NEG_INFINITY, f64::max);
        Cohort::new(subjects, self.registry.clone(), Some(self.tau.min(max_censor)))
    }

    /// Exchanges the roles of event and non-event visits.
    pub fn with_visit_kinds_swapped(&self) -> Self {
        let mut subjects = self.subjects.clone();
        for subject in &mut subjects {
            for visit in &mut subject.visits {
                visit.kind = visit.kind.swapped();
            }
            subject.sort_visits();
        }
        Self {
            subjects,
            registry: self.registry.clone(),
            tau: self.tau,
        }
    }

    /// Rewrites every recorded value of one covariate, including missing
    /// markers (NaN stays NaN).
    pub fn map_covariate(&self, name: &str, f: impl Fn(f64) -> f64) -> Result<Self> {
        let slot = self.registry.slot(name)?;
        let mut subjects = self.subjects.clone();
        for subject in &mut subjects {
            match slot {
                CovariateSlot::Baseline(j) => {
                    let v = &mut subject.baseline.values_mut()[j];
                    *v = f(*v);
                }
                CovariateSlot::Visit(j) => {
                    for visit in &mut subject.visits {
                        let v = &mut visit.covariates.values_mut()[j];
                        if !v.is_nan() {
                            *v = f(*v);
                        }
                    }
                }
            }
        }
        Cohort::new(subjects, self.registry.clone(), Some(self.tau))
    }

    pub fn event_count(&self) -> usize {
        self.count_kind(VisitKind::Event)
    }

    pub fn nonevent_count(&self) -> usize {
        self.count_kind(VisitKind::Nonevent)
    }

    fn count_kind(&self, kind: VisitKind) -> usize {
        self.subjects
            .iter()
            .flat_map(|s| &s.visits)
            .filter(|v| v.kind == kind)
            .count()
    }
}
