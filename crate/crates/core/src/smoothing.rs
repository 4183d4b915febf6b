//! Kernel-smoothed moments over non-event visits.
//!
//! For a time `t`, the smoothed moments are
//!
//! ```text
//! S_k(t; beta, alpha) = n^-1 sum_i sum_j K_h(t - V_ij) exp(beta'Y_ij - alpha'X_ij) Y_ij^{(k)}
//! ```
//!
//! where `V_ij` are the observation-visit times, `Y_ij` the scored covariates
//! recorded there and `X_ij` the offset covariates (history features for the
//! inverse-rate-weighted estimator, or the visit-model covariates in the
//! disjoint setting). With `alpha = 0` this is the unweighted kernel mean.
//!
//! Observations are sorted once; score passes slide a window of width `2h`
//! along the sorted event times. Exponentials are shifted by the window
//! maximum so that ratios never overflow.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, CovariateSlot, HistoryFeatureSpec, HistoryFeatures, Subject, VisitKind};
use crate::error::{Error, Result};

/// Epanechnikov kernel `0.75 (1 - u^2)` on `|u| < 1`.
pub fn kernel_weight(u: f64) -> f64 {
    if u.abs() < 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// `K_h(d) = K(d / h) / h`.
#[inline]
fn scaled_kernel(d: f64, h: f64) -> f64 {
    kernel_weight(d / h) / h
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed { h: f64 },
    /// `h = c * n^(-nu)`.
    Rule { c: f64, nu: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroDenominatorPolicy {
    #[default]
    Error,
    /// Skip score terms whose smoothing window is empty.
    DropTerm,
}

/// Kernel settings. The kernel is Epanechnikov and the left boundary is
/// always handled by evaluating at `max(t, h)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub bandwidth: Bandwidth,
    #[serde(default)]
    pub zero_denominator: ZeroDenominatorPolicy,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Rule {
                c: 2.0,
                nu: 1.0 / 3.0,
            },
            zero_denominator: ZeroDenominatorPolicy::Error,
        }
    }
}

impl KernelConfig {
    pub fn fixed(h: f64) -> Self {
        Self {
            bandwidth: Bandwidth::Fixed { h },
            ..Self::default()
        }
    }

    pub fn rule(c: f64, nu: f64) -> Self {
        Self {
            bandwidth: Bandwidth::Rule { c, nu },
            ..Self::default()
        }
    }

    pub fn with_policy(mut self, policy: ZeroDenominatorPolicy) -> Self {
        self.zero_denominator = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.bandwidth {
            Bandwidth::Fixed { h } if !(h > 0.0 && h.is_finite()) => Err(Error::InvalidConfig(
                format!("fixed bandwidth must be positive, got {h}"),
            )),
            Bandwidth::Rule { c, nu } if !(c > 0.0 && c.is_finite() && nu > 0.25 && nu < 0.5) => {
                Err(Error::InvalidConfig(format!(
                    "bandwidth rule needs c > 0 and nu in (1/4, 1/2), got c = {c}, nu = {nu}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Bandwidth for a sample of `n` subjects.
pub fn resolve_bandwidth(config: &KernelConfig, n: usize) -> Result<f64> {
    config.validate()?;
    if n == 0 {
        return Err(Error::InvalidConfig("bandwidth rule needs n >= 1".into()));
    }
    let h = match config.bandwidth {
        Bandwidth::Fixed { h } => h,
        Bandwidth::Rule { c, nu } => c * (n as f64).powf(-nu),
    };
    if h > 0.0 && h.is_finite() {
        Ok(h)
    } else {
        Err(Error::InvalidConfig(format!("bandwidth resolved to {h}")))
    }
}

/// Smoothed moments at one time point, stored on a shifted scale: the
/// moment itself is the field value times `exp(log_scale)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothedMoments {
    pub s0: f64,
    pub s1: Vec<f64>,
    /// Row-major `p x p`.
    pub s2: Vec<f64>,
    pub log_scale: f64,
    /// Observations with positive kernel weight.
    pub window_count: usize,
}

impl SmoothedMoments {
    fn empty(p: usize) -> Self {
        Self {
            s0: 0.0,
            s1: vec![0.0; p],
            s2: vec![0.0; p * p],
            log_scale: 0.0,
            window_count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.s1.len()
    }

    /// Unscaled zeroth moment.
    pub fn s0_value(&self) -> f64 {
        self.s0 * self.log_scale.exp()
    }

    /// `ln S_0`, or `-inf` for an empty window.
    pub fn log_s0(&self) -> f64 {
        self.s0.ln() + self.log_scale
    }

    /// `S_1 / S_0`, `None` for an empty window.
    pub fn mean(&self) -> Option<Vec<f64>> {
        (self.s0 > 0.0).then(|| self.s1.iter().map(|v| v / self.s0).collect())
    }

    /// `S_2 / S_0 - mean mean'` (row-major), `None` for an empty window.
    pub fn covariance(&self) -> Option<Vec<f64>> {
        let mean = self.mean()?;
        let p = mean.len();
        let mut v = vec![0.0; p * p];
        for a in 0..p {
            for b in 0..p {
                v[a * p + b] = self.s2[a * p + b] / self.s0 - mean[a] * mean[b];
            }
        }
        Some(v)
    }
}

/// Result of one pass over the scored events.
#[derive(Clone, Debug)]
pub struct ScorePass {
    /// `n^-1 sum [beta'Y - ln S_0(t)]`.
    pub objective: f64,
    pub score: Vec<f64>,
    /// Derivative of the score in `beta`.
    pub jacobian: DMatrix<f64>,
    pub dropped: usize,
}

/// Sorted observation and event records for kernel-weighted estimating equations.
#[derive(Clone, Debug)]
pub struct SmoothingDesign {
    n: usize,
    p: usize,
    q: usize,
    obs_times: Vec<f64>,
    obs_y: Vec<f64>,
    obs_x: Vec<f64>,
    event_times: Vec<f64>,
    event_y: Vec<f64>,
}

fn value_or_missing(
    subject: &Subject,
    slot: CovariateSlot,
    visit: usize,
    name: &str,
) -> Result<f64> {
    let v = subject.value_at_visit(slot, visit);
    if v.is_nan() {
        Err(Error::MissingCovariate {
            subject: subject.id.clone(),
            name: name.to_string(),
            time: subject.visits[visit].time,
        })
    } else {
        Ok(v)
    }
}

fn sort_records(times: &mut Vec<f64>, rows: &mut [&mut Vec<f64>], widths: &[usize]) {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    *times = order.iter().map(|&k| times[k]).collect();
    for (row, &w) in rows.iter_mut().zip(widths) {
        let sorted: Vec<f64> = order
            .iter()
            .flat_map(|&k| row[k * w..(k + 1) * w].iter().copied())
            .collect();
        **row = sorted;
    }
}

enum Offset<'a> {
    History(&'a HistoryFeatures),
    Covariates(&'a [CovariateSlot], &'a [String]),
}

impl SmoothingDesign {
    /// Design for the inverse-rate-weighted estimator: events are the event
    /// visits up to `tau`, observations are all non-event visits, `Y` is the
    /// named event covariates and `X` the history features.
    pub fn from_cohort(
        cohort: &Cohort,
        covariates: &[String],
        history: &HistoryFeatureSpec,
    ) -> Result<Self> {
        let features = history.bind(cohort.registry())?;
        let slots = cohort.registry().slots(covariates)?;
        Self::build(
            cohort,
            VisitKind::Event,
            &slots,
            covariates,
            Offset::History(&features),
        )
    }

    /// Design where the scored process is `scored_kind`, smoothing runs over
    /// visits of the other kind, and the weight offset uses `offset` covariates.
    pub fn two_process(
        cohort: &Cohort,
        scored_kind: VisitKind,
        scored: &[String],
        offset: &[String],
    ) -> Result<Self> {
        let slots = cohort.registry().slots(scored)?;
        let offset_slots = cohort.registry().slots(offset)?;
        Self::build(
            cohort,
            scored_kind,
            &slots,
            scored,
            Offset::Covariates(&offset_slots, offset),
        )
    }

    fn build(
        cohort: &Cohort,
        scored_kind: VisitKind,
        slots: &[CovariateSlot],
        names: &[String],
        offset: Offset<'_>,
    ) -> Result<Self> {
        let p = slots.len();
        let q = match &offset {
            Offset::History(f) => f.dim(),
            Offset::Covariates(s, _) => s.len(),
        };
        let tau = cohort.tau();
        let (mut obs_times, mut obs_y, mut obs_x) = (Vec::new(), Vec::new(), Vec::new());
        let (mut event_times, mut event_y) = (Vec::new(), Vec::new());

        for subject in cohort.subjects() {
            let segments = match &offset {
                Offset::History(f) => Some(f.segments(subject)),
                Offset::Covariates(..) => None,
            };
            for (k, visit) in subject.visits.iter().enumerate() {
                let scored = visit.kind == scored_kind;
                if scored && visit.time > tau {
                    continue;
                }
                let y = slots
                    .iter()
                    .zip(names)
                    .map(|(&slot, name)| value_or_missing(subject, slot, k, name))
                    .collect::<Result<Vec<f64>>>()?;
                if scored {
                    event_times.push(visit.time);
                    event_y.extend(y);
                    continue;
                }
                match &offset {
                    Offset::History(f) => {
                        let row = subject.visits_before(visit.time);
                        let x = &segments.as_ref().expect("segments")[row * q..(row + 1) * q];
                        if let Some(j) = x.iter().position(|v| v.is_nan()) {
                            return Err(Error::MissingCovariate {
                                subject: subject.id.clone(),
                                name: f.names()[j].clone(),
                                time: visit.time,
                            });
                        }
                        obs_x.extend_from_slice(x);
                    }
                    Offset::Covariates(offset_slots, offset_names) => {
                        for (&slot, name) in offset_slots.iter().zip(offset_names.iter()) {
                            obs_x.push(value_or_missing(subject, slot, k, name)?);
                        }
                    }
                }
                obs_times.push(visit.time);
                obs_y.extend(y);
            }
        }
        sort_records(&mut obs_times, &mut [&mut obs_y, &mut obs_x], &[p, q]);
        sort_records(&mut event_times, &mut [&mut event_y], &[p]);
        Ok(Self {
            n: cohort.n(),
            p,
            q,
            obs_times,
            obs_y,
            obs_x,
            event_times,
            event_y,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Dimension of the scored covariates.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Dimension of the offset covariates.
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn event_times(&self) -> &[f64] {
        &self.event_times
    }

    pub fn observation_times(&self) -> &[f64] {
        &self.obs_times
    }

    fn log_weights(&self, beta: &[f64], alpha: &[f64]) -> Vec<f64> {
        assert_eq!(beta.len(), self.p, "beta has wrong dimension");
        assert_eq!(alpha.len(), self.q, "alpha has wrong dimension");
        (0..self.obs_times.len())
            .map(|k| {
                let y = &self.obs_y[k * self.p..(k + 1) * self.p];
                let x = &self.obs_x[k * self.q..(k + 1) * self.q];
                dot(beta, y) - dot(alpha, x)
            })
            .collect()
    }

    fn window(&self, t: f64, h: f64) -> (usize, usize) {
        let lo = self.obs_times.partition_point(|&v| v <= t - h);
        let hi = self.obs_times.partition_point(|&v| v < t + h);
        (lo, hi.max(lo))
    }

    fn window_moments(
        &self,
        lo: usize,
        hi: usize,
        t: f64,
        h: f64,
        log_w: &[f64],
        second: bool,
    ) -> SmoothedMoments {
        let p = self.p;
        let mut m = SmoothedMoments::empty(p);
        let mut shift = f64::NEG_INFINITY;
        for k in lo..hi {
            if scaled_kernel(t - self.obs_times[k], h) > 0.0 {
                shift = shift.max(log_w[k]);
            }
        }
        if shift == f64::NEG_INFINITY {
            return m;
        }
        for k in lo..hi {
            let kw = scaled_kernel(t - self.obs_times[k], h);
            if kw <= 0.0 {
                continue;
            }
            m.window_count += 1;
            let e = kw * (log_w[k] - shift).exp();
            let y = &self.obs_y[k * p..(k + 1) * p];
            m.s0 += e;
            for a in 0..p {
                m.s1[a] += e * y[a];
                if second {
                    for b in 0..=a {
                        m.s2[a * p + b] += e * y[a] * y[b];
                    }
                }
            }
        }
        if second {
            for a in 0..p {
                for b in 0..a {
                    m.s2[b * p + a] = m.s2[a * p + b];
                }
            }
        }
        m.log_scale = shift - (self.n as f64).ln();
        m
    }

    /// Smoothed moments at `t` (no boundary adjustment).
    pub fn moments(&self, t: f64, beta: &[f64], alpha: &[f64], h: f64) -> SmoothedMoments {
        let log_w = self.log_weights(beta, alpha);
        let (lo, hi) = self.window(t, h);
        self.window_moments(lo, hi, t, h, &log_w, true)
    }

    /// Weighted covariate mean evaluated at `max(t, h)`.
    pub fn weighted_mean(&self, t: f64, beta: &[f64], alpha: &[f64], h: f64) -> Result<Vec<f64>> {
        let tc = t.max(h);
        let m = self.moments(tc, beta, alpha, h);
        m.mean().ok_or(Error::ZeroDenominator {
            time: tc,
            window_count: m.window_count,
        })
    }

    /// `S_0` at `max(T, h)` for every scored event time, on the log scale
    /// (`-inf` for an empty window).
    pub fn log_s0_at_events(&self, beta: &[f64], alpha: &[f64], h: f64) -> Vec<f64> {
        let log_w = self.log_weights(beta, alpha);
        self.event_times
            .iter()
            .map(|&t| {
                let tc = t.max(h);
                let (lo, hi) = self.window(tc, h);
                self.window_moments(lo, hi, tc, h, &log_w, false).log_s0()
            })
            .collect()
    }

    /// Score `n^-1 sum_events {Y - S_1/S_0}` at clamped event times, with
    /// its Jacobian and the matching pseudo log-likelihood.
    pub fn score_pass(
        &self,
        beta: &[f64],
        alpha: &[f64],
        h: f64,
        policy: ZeroDenominatorPolicy,
    ) -> Result<ScorePass> {
        let p = self.p;
        let log_w = self.log_weights(beta, alpha);
        let mut score = vec![0.0; p];
        let mut jac = DMatrix::zeros(p, p);
        let mut objective = 0.0;
        let mut dropped = 0;

        let (mut lo, mut hi) = (0, 0);
        let mut cached: Option<(f64, SmoothedMoments)> = None;
        for (e, &t) in self.event_times.iter().enumerate() {
            let tc = t.max(h);
            let reuse = matches!(&cached, Some((ct, _)) if *ct == tc);
            if !reuse {
                while hi < self.obs_times.len() && self.obs_times[hi] < tc + h {
                    hi += 1;
                }
                while lo < hi && self.obs_times[lo] <= tc - h {
                    lo += 1;
                }
                cached = Some((tc, self.window_moments(lo, hi, tc, h, &log_w, true)));
            }
            let m = &cached.as_ref().expect("window cached").1;
            if m.s0 <= 0.0 {
                match policy {
                    ZeroDenominatorPolicy::Error => {
                        return Err(Error::ZeroDenominator {
                            time: t,
                            window_count: m.window_count,
                        })
                    }
                    ZeroDenominatorPolicy::DropTerm => {
                        dropped += 1;
                        continue;
                    }
                }
            }
            let y = &self.event_y[e * p..(e + 1) * p];
            objective += dot(beta, y) - m.log_s0();
            for a in 0..p {
                let mean_a = m.s1[a] / m.s0;
                score[a] += y[a] - mean_a;
                for b in 0..p {
                    let mean_b = m.s1[b] / m.s0;
                    jac[(a, b)] -= m.s2[a * p + b] / m.s0 - mean_a * mean_b;
                }
            }
        }
        let n = self.n as f64;
        score.iter_mut().for_each(|s| *s /= n);
        jac /= n;
        Ok(ScorePass {
            objective: objective / n,
            score,
            jacobian: jac,
            dropped,
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Smoothed moments for a cohort at `t`, with event covariates `covariates`
/// and history features `spec`.
pub fn smoothed_moments(
    cohort: &Cohort,
    covariates: &[String],
    spec: &HistoryFeatureSpec,
    t: f64,
    beta: &[f64],
    alpha: &[f64],
    h: f64,
) -> Result<SmoothedMoments> {
    check_lengths(covariates.len(), spec.len(), beta, alpha)?;
    Ok(SmoothingDesign::from_cohort(cohort, covariates, spec)?.moments(t, beta, alpha, h))
}

/// Inverse-rate-weighted covariate mean with the left-boundary clamp.
pub fn weighted_covariate_mean(
    cohort: &Cohort,
    covariates: &[String],
    spec: &HistoryFeatureSpec,
    t: f64,
    beta: &[f64],
    alpha: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    check_lengths(covariates.len(), spec.len(), beta, alpha)?;
    SmoothingDesign::from_cohort(cohort, covariates, spec)?.weighted_mean(t, beta, alpha, h)
}

fn check_lengths(p: usize, q: usize, beta: &[f64], alpha: &[f64]) -> Result<()> {
    if beta.len() != p || alpha.len() != q {
        return Err(Error::InvalidConfig(format!(
            "expected beta of length {p} and alpha of length {q}, got {} and {}",
            beta.len(),
            alpha.len()
        )));
    }
    Ok(())
}

/// Risk-set weighted mean of `X(u)` over subjects with `C >= u`.
pub fn visit_mean(
    cohort: &Cohort,
    spec: &HistoryFeatureSpec,
    u: f64,
    alpha: &[f64],
) -> Result<Vec<f64>> {
    let features = spec.bind(cohort.registry())?;
    check_lengths(0, features.dim(), &[], alpha)?;
    let rows: Vec<Vec<f64>> = cohort
        .subjects()
        .iter()
        .filter(|s| s.censor_time >= u)
        .map(|s| {
            let x = features.evaluate(s, u);
            match x.iter().position(|v| v.is_nan()) {
                Some(j) => Err(Error::MissingCovariate {
                    subject: s.id.clone(),
                    name: features.names()[j].clone(),
                    time: u,
                }),
                None => Ok(x),
            }
        })
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(Error::EmptyRiskSet { time: u });
    }
    let eta: Vec<f64> = rows.iter().map(|x| dot(alpha, x)).collect();
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    let mut mean = vec![0.0; features.dim()];
    for (x, e) in rows.iter().zip(&eta) {
        let w = (e - shift).exp();
        total += w;
        for (m, v) in mean.iter_mut().zip(x) {
            *m += w * v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    Ok(mean)
}
