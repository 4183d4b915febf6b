//! Estimators of the proportional rate model for event visits.
//!
//! All four estimators solve `n^-1 sum_events {Z(T) - E(T, beta)} = 0` and
//! differ only in how the risk-set covariate mean `E` is obtained:
//!
//! - **proposed**: kernel smoothing over non-event visits, each weighted by
//!   the inverse of its fitted visit rate `exp(-alpha'X)`;
//! - **ppl**: the same smoother without weights;
//! - **locf**: the exact risk-set mean after carrying covariates forward;
//! - **full oracle**: the exact risk-set mean from the true covariate paths
//!   (simulation only).

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, CovariateSlot, Fill, HistoryFeatureSpec, Subject};
use crate::error::{Error, Result};
use crate::simlab::SimulatedCohort;
use crate::smoothing::{dot, resolve_bandwidth, KernelConfig, SmoothingDesign, ZeroDenominatorPolicy};
use crate::solver::{newton, EstimatingEquation, Evaluation, SolverConfig};
use crate::visitfit::{fit_visit_model, BaselineVisitRate, VisitModelFit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMethod {
    Proposed,
    Ppl,
    Locf,
    FullOracle,
}

impl RateMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            RateMethod::Proposed => "proposed",
            RateMethod::Ppl => "ppl",
            RateMethod::Locf => "locf",
            RateMethod::FullOracle => "full_oracle",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RateModelFit {
    pub method: RateMethod,
    pub covariate_names: Vec<String>,
    pub beta_hat: Vec<f64>,
    pub score_norm: f64,
    pub iterations: usize,
    pub dropped_event_terms: usize,
    /// Bandwidth used by the kernel methods.
    pub bandwidth: Option<f64>,
    /// Step function `(t, M_0(t))`, starting at `(0, 0)`, one step per
    /// distinct event time up to tau.
    pub baseline_cumulative: Vec<(f64, f64)>,
    pub visit_fit: Option<VisitModelFit>,
}

impl RateModelFit {
    /// Baseline cumulative rate at `t` (right-continuous step function).
    pub fn cumulative_at(&self, t: f64) -> f64 {
        let k = self.baseline_cumulative.partition_point(|&(s, _)| s <= t);
        if k == 0 {
            0.0
        } else {
            self.baseline_cumulative[k - 1].1
        }
    }
}

struct KernelEquation<'a> {
    design: &'a SmoothingDesign,
    alpha: &'a [f64],
    h: f64,
    policy: ZeroDenominatorPolicy,
}

impl EstimatingEquation for KernelEquation<'_> {
    fn dim(&self) -> usize {
        self.design.p()
    }

    fn evaluate(&self, beta: &[f64]) -> Result<Evaluation> {
        let pass = self.design.score_pass(beta, self.alpha, self.h, self.policy)?;
        Ok(Evaluation {
            objective: pass.objective,
            score: pass.score,
            jacobian: pass.jacobian,
        })
    }
}

fn step_curve(times: &[f64], increments: impl Iterator<Item = f64>) -> Vec<(f64, f64)> {
    let mut curve = vec![(0.0, 0.0)];
    let mut total = 0.0;
    for (&t, inc) in times.iter().zip(increments) {
        total += inc;
        match curve.last_mut() {
            Some(last) if last.0 == t => last.1 = total,
            _ => curve.push((t, total)),
        }
    }
    curve
}

fn kernel_fit(
    cohort: &Cohort,
    covariates: &[String],
    spec: &HistoryFeatureSpec,
    kernel: &KernelConfig,
    solver: &SolverConfig,
    method: RateMethod,
) -> Result<RateModelFit> {
    solver.validate()?;
    let h = resolve_bandwidth(kernel, cohort.n())?;
    let design = SmoothingDesign::from_cohort(cohort, covariates, spec)?;
    if design.event_times().is_empty() {
        return Err(Error::NoEvents);
    }
    let (alpha, rate, visit_fit) = match method {
        RateMethod::Proposed => {
            let mut vf = fit_visit_model(cohort, spec, solver)?;
            vf.fill_baseline_grid(h, cohort.tau(), 101);
            (vf.alpha_hat.clone(), vf.rate.clone(), Some(vf))
        }
        _ => {
            let vf = crate::visitfit::unweighted_rate(cohort)?;
            (Vec::new(), vf, None)
        }
    };
    let equation = KernelEquation {
        design: &design,
        alpha: &alpha,
        h,
        policy: kernel.zero_denominator,
    };
    let solution = newton(&equation, solver, solver.start(design.p())?)?;
    let dropped = design
        .score_pass(&solution.estimate, &alpha, h, kernel.zero_denominator)?
        .dropped;
    let baseline_cumulative = kernel_cumulative(&design, &rate, &solution.estimate, &alpha, h);
    Ok(RateModelFit {
        method,
        covariate_names: covariates.to_vec(),
        beta_hat: solution.estimate,
        score_norm: solution.score_norm,
        iterations: solution.iterations,
        dropped_event_terms: dropped,
        bandwidth: Some(h),
        baseline_cumulative,
        visit_fit,
    })
}

/// `M_0(t) = n^-1 sum_{T <= t} lambda_0(T) / S_0(T, beta, alpha)`, with both
/// smoothers evaluated at `max(T, h)`.
fn kernel_cumulative(
    design: &SmoothingDesign,
    rate: &BaselineVisitRate,
    beta: &[f64],
    alpha: &[f64],
    h: f64,
) -> Vec<(f64, f64)> {
    let ln_n = (design.n() as f64).ln();
    let log_s0 = design.log_s0_at_events(beta, alpha, h);
    let increments = design.event_times().iter().zip(log_s0).map(|(&t, ls0)| {
        if ls0.is_finite() {
            (rate.ln_at(t, h) - ls0 - ln_n).exp()
        } else {
            0.0
        }
    });
    step_curve(design.event_times(), increments)
}

/// Inverse-rate-weighted two-step estimator: fit the visit model, then solve
/// the weighted kernel score equation.
pub fn fit_proposed(
    cohort: &Cohort,
    covariates: &[String],
    spec: &HistoryFeatureSpec,
    kernel: &KernelConfig,
    solver: &SolverConfig,
) -> Result<RateModelFit> {
    kernel_fit(cohort, covariates, spec, kernel, solver, RateMethod::Proposed)
}

/// Unweighted kernel-smoothing estimator.
pub fn fit_ppl(
    cohort: &Cohort,
    covariates: &[String],
    kernel: &KernelConfig,
    solver: &SolverConfig,
) -> Result<RateModelFit> {
    kernel_fit(
        cohort,
        covariates,
        &HistoryFeatureSpec::empty(),
        kernel,
        solver,
        RateMethod::Ppl,
    )
}

/// The kernel score at given coefficients, recomputed from scratch.
pub fn kernel_score(
    cohort: &Cohort,
    covariates: &[String],
    spec: &HistoryFeatureSpec,
    kernel: &KernelConfig,
    alpha: &[f64],
    beta: &[f64],
) -> Result<Vec<f64>> {
    let h = resolve_bandwidth(kernel, cohort.n())?;
    let design = SmoothingDesign::from_cohort(cohort, covariates, spec)?;
    Ok(design.score_pass(beta, alpha, h, kernel.zero_denominator)?.score)
}

/// `M_0(t)` from a proposed or PPL fit.
pub fn baseline_cumulative_proposed(fit: &RateModelFit, t: f64) -> Result<f64> {
    match fit.method {
        RateMethod::Proposed | RateMethod::Ppl => Ok(fit.cumulative_at(t)),
        other => Err(Error::InvalidConfig(format!(
            "kernel baseline estimator requested for a {} fit",
            other.as_str()
        ))),
    }
}

/// Breslow-type `M_0(t)` from a full-data (oracle or LOCF) fit.
pub fn baseline_cumulative_oracle(fit: &RateModelFit, t: f64) -> Result<f64> {
    match fit.method {
        RateMethod::FullOracle | RateMethod::Locf => Ok(fit.cumulative_at(t)),
        other => Err(Error::InvalidConfig(format!(
            "Breslow estimator requested for a {} fit",
            other.as_str()
        ))),
    }
}

/// Events with the complete covariate vector of every subject at risk.
struct FullDataDesign {
    n: usize,
    p: usize,
    times: Vec<f64>,
    event_z: Vec<f64>,
    /// Per event: flat `m x p` rows of at-risk covariates.
    risk_z: Vec<Vec<f64>>,
}

impl FullDataDesign {
    /// `value(subject_index, t, out)` fills the covariate vector of a subject at `t`.
    fn build(
        cohort: &Cohort,
        p: usize,
        mut value: impl FnMut(usize, f64, &mut [f64]) -> Result<()>,
    ) -> Result<Self> {
        let tau = cohort.tau();
        let mut events: Vec<(f64, usize)> = cohort
            .subjects()
            .iter()
            .enumerate()
            .flat_map(|(i, s)| {
                s.visits
                    .iter()
                    .filter(|v| v.kind == crate::cohort::VisitKind::Event && v.time <= tau)
                    .map(move |v| (v.time, i))
            })
            .collect();
        if events.is_empty() {
            return Err(Error::NoEvents);
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut by_censor: Vec<usize> = (0..cohort.n()).collect();
        by_censor.sort_by(|&a, &b| {
            cohort.subjects()[b]
                .censor_time
                .total_cmp(&cohort.subjects()[a].censor_time)
        });
        let censor_desc: Vec<f64> = by_censor
            .iter()
            .map(|&i| cohort.subjects()[i].censor_time)
            .collect();

        let mut times = Vec::with_capacity(events.len());
        let mut event_z = Vec::with_capacity(events.len() * p);
        let mut risk_z = Vec::with_capacity(events.len());
        let mut buf = vec![0.0; p];
        for &(t, i) in &events {
            value(i, t, &mut buf)?;
            times.push(t);
            event_z.extend_from_slice(&buf);
            let m = censor_desc.partition_point(|&c| c >= t);
            let mut rows = Vec::with_capacity(m * p);
            for &j in &by_censor[..m] {
                value(j, t, &mut buf)?;
                rows.extend_from_slice(&buf);
            }
            risk_z.push(rows);
        }
        Ok(Self {
            n: cohort.n(),
            p,
            times,
            event_z,
            risk_z,
        })
    }

    /// Per event: `(ln sum_j exp(beta'Z_j), S_1 / S_0, S_2 / S_0)`.
    fn risk_moments(&self, e: usize, beta: &[f64], second: bool) -> (f64, Vec<f64>, Vec<f64>) {
        let p = self.p;
        let rows = &self.risk_z[e];
        let eta: Vec<f64> = rows.chunks(p.max(1)).map(|z| if p == 0 { 0.0 } else { dot(beta, z) }).collect();
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![0.0; if second { p * p } else { 0 }];
        for (k, &et) in eta.iter().enumerate() {
            let w = (et - shift).exp();
            let z = &rows[k * p..(k + 1) * p];
            s0 += w;
            for a in 0..p {
                s1[a] += w * z[a];
                if second {
                    for b in 0..p {
                        s2[a * p + b] += w * z[a] * z[b];
                    }
                }
            }
        }
        s1.iter_mut().for_each(|v| *v /= s0);
        s2.iter_mut().for_each(|v| *v /= s0);
        (s0.ln() + shift, s1, s2)
    }

    fn cumulative(&self, beta: &[f64]) -> Vec<(f64, f64)> {
        let inc: Vec<f64> = (0..self.times.len())
            .map(|e| (-self.risk_moments(e, beta, false).0).exp())
            .collect();
        step_curve(&self.times, inc.into_iter())
    }
}

impl EstimatingEquation for FullDataDesign {
    fn dim(&self) -> usize {
        self.p
    }

    fn evaluate(&self, beta: &[f64]) -> Result<Evaluation> {
        let p = self.p;
        let mut score = vec![0.0; p];
        let mut jac = DMatrix::zeros(p, p);
        let mut objective = 0.0;
        for e in 0..self.times.len() {
            let (log_s0, mean, second) = self.risk_moments(e, beta, true);
            let z = &self.event_z[e * p..(e + 1) * p];
            objective += dot(beta, z) - log_s0;
            for a in 0..p {
                score[a] += z[a] - mean[a];
                for b in 0..p {
                    jac[(a, b)] -= second[a * p + b] - mean[a] * mean[b];
                }
            }
        }
        let n = self.n as f64;
        score.iter_mut().for_each(|s| *s /= n);
        jac /= n;
        Ok(Evaluation {
            objective: objective / n,
            score,
            jacobian: jac,
        })
    }
}

fn full_data_fit(
    design: FullDataDesign,
    covariates: &[String],
    solver: &SolverConfig,
    method: RateMethod,
) -> Result<RateModelFit> {
    solver.validate()?;
    let solution = newton(&design, solver, solver.start(design.p)?)?;
    let baseline_cumulative = design.cumulative(&solution.estimate);
    Ok(RateModelFit {
        method,
        covariate_names: covariates.to_vec(),
        beta_hat: solution.estimate,
        score_norm: solution.score_norm,
        iterations: solution.iterations,
        dropped_event_terms: 0,
        bandwidth: None,
        baseline_cumulative,
        visit_fit: None,
    })
}

/// How LOCF imputes a covariate before the subject's first record of it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreVisitImputation {
    /// Carry the first recorded value backward.
    #[default]
    BackwardFill,
    /// Use the configured fill value.
    UseFill,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocfOptions {
    pub pre_visit: PreVisitImputation,
    /// Per-covariate fallbacks, used for subjects without any record of the
    /// covariate (and before the first record under `UseFill`).
    pub fills: BTreeMap<String, Fill>,
}

enum LocfSource {
    Baseline(usize),
    Visit { col: usize, fill: Option<Fill> },
}

fn locf_value(
    subject: &Subject,
    source: &LocfSource,
    t: f64,
    pre_visit: PreVisitImputation,
    registry: &crate::cohort::CovariateRegistry,
    name: &str,
) -> Result<f64> {
    match source {
        LocfSource::Baseline(j) => Ok(subject.baseline.values()[*j]),
        LocfSource::Visit { col, fill } => {
            let upto = subject.visits.partition_point(|v| v.time < t);
            if let Some(v) = subject.visits[..upto]
                .iter()
                .rev()
                .find_map(|v| v.covariates.get(*col))
            {
                return Ok(v);
            }
            let fill_value = |f: &Fill| -> Result<f64> {
                match f {
                    Fill::Value(v) => Ok(*v),
                    Fill::Baseline { baseline } => match registry.slot(baseline)? {
                        CovariateSlot::Baseline(j) => Ok(subject.baseline.values()[j]),
                        CovariateSlot::Visit(_) => Err(Error::InvalidConfig(format!(
                            "fill column `{baseline}` must be a baseline covariate"
                        ))),
                    },
                }
            };
            if pre_visit == PreVisitImputation::BackwardFill {
                if let Some(v) = subject.visits[upto..]
                    .iter()
                    .find_map(|v| v.covariates.get(*col))
                {
                    return Ok(v);
                }
            }
            match fill {
                Some(f) => fill_value(f),
                None => Err(Error::MissingCovariate {
                    subject: subject.id.clone(),
                    name: name.to_string(),
                    time: t,
                }),
            }
        }
    }
}

/// Last observation carried forward, then the full-data score equation.
///
/// `Z(t)` is imputed by the value recorded at the most recent visit (either
/// kind) strictly before `t`, so the imputed path is predictable; the event
/// subject's own covariates at an event time are imputed the same way.
pub fn fit_locf(
    cohort: &Cohort,
    covariates: &[String],
    options: &LocfOptions,
    solver: &SolverConfig,
) -> Result<RateModelFit> {
    let registry = cohort.registry();
    for name in options.fills.keys() {
        if !covariates.contains(name) {
            return Err(Error::InvalidConfig(format!(
                "LOCF fill given for `{name}`, which is not an event covariate"
            )));
        }
    }
    let sources = covariates
        .iter()
        .map(|name| {
            Ok(match registry.slot(name)? {
                CovariateSlot::Baseline(j) => LocfSource::Baseline(j),
                CovariateSlot::Visit(col) => LocfSource::Visit {
                    col,
                    fill: options.fills.get(name).cloned(),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let design = FullDataDesign::build(cohort, covariates.len(), |i, t, out| {
        let s = &cohort.subjects()[i];
        for ((slot, src), name) in out.iter_mut().zip(&sources).zip(covariates) {
            *slot = locf_value(s, src, t, options.pre_visit, registry, name)?;
        }
        Ok(())
    })?;
    full_data_fit(design, covariates, solver, RateMethod::Locf)
}

/// Full-data estimator using the true covariate paths of a simulated cohort.
pub fn fit_full_oracle(simulated: &SimulatedCohort, solver: &SolverConfig) -> Result<RateModelFit> {
    let names = simulated.event_covariate_names();
    let design = FullDataDesign::build(&simulated.cohort, names.len(), |i, t, out| {
        simulated.true_covariates(i, t, out);
        Ok(())
    })?;
    full_data_fit(design, &names, solver, RateMethod::FullOracle)
}

/// Full-data estimator for arbitrary known covariate paths.
pub fn fit_full_paths(
    cohort: &Cohort,
    covariates: &[String],
    path: impl Fn(usize, f64, &mut [f64]),
    solver: &SolverConfig,
) -> Result<RateModelFit> {
    let design = FullDataDesign::build(cohort, covariates.len(), |i, t, out| {
        path(i, t, out);
        Ok(())
    })?;
    full_data_fit(design, covariates, solver, RateMethod::FullOracle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{CovariateRegistry, HistoryRule, Visit, VisitKind};

    fn fixture() -> Cohort {
        let subjects = "subject_id,censor_time,Z1\na,3,0.4\nb,2.5,-0.1\nc,2.8,0.2\n";
        let visits = "subject_id,time,kind,Z2\n\
            a,0.4,nonevent,1\na,1.0,nonevent,1\na,2.0,event,0\n\
            b,0.5,nonevent,0\nb,1.2,event,1\nb,1.4,nonevent,0\n\
            c,0.9,nonevent,1\nc,1.6,event,1\nc,2.1,nonevent,0\n";
        crate::cohort::load_cohort(subjects.as_bytes(), visits.as_bytes(), None).unwrap()
    }

    #[test]
    fn no_events_is_an_error() {
        let registry = CovariateRegistry::new(vec![], vec!["Z".into()]).unwrap();
        let s = |id: &str| Subject {
            id: id.into(),
            censor_time: 2.0,
            baseline: vec![].into(),
            visits: vec![Visit {
                time: 1.0,
                kind: VisitKind::Nonevent,
                covariates: vec![1.0].into(),
            }],
        };
        let c = Cohort::new(vec![s("a"), s("b")], registry, None).unwrap();
        let z = vec!["Z".to_string()];
        assert!(matches!(
            fit_ppl(&c, &z, &KernelConfig::fixed(1.0), &SolverConfig::default()),
            Err(Error::NoEvents)
        ));
        assert!(matches!(
            fit_locf(&c, &z, &LocfOptions::default(), &SolverConfig::default()),
            Err(Error::NoEvents)
        ));
    }

    #[test]
    fn cumulative_curve_starts_at_zero_and_is_monotone() {
        let c = fixture();
        let z = vec!["Z1".to_string()];
        let spec = HistoryFeatureSpec::new(vec![HistoryRule::AnyPriorVisit]);
        let kernel = KernelConfig::fixed(1.5);
        let fit = fit_ppl(&c, &z, &kernel, &SolverConfig::default()).unwrap();
        assert_eq!(fit.cumulative_at(0.0), 0.0);
        assert_eq!(baseline_cumulative_proposed(&fit, 0.0).unwrap(), 0.0);
        let mut prev = 0.0;
        for &(_, m) in &fit.baseline_cumulative {
            assert!(m >= prev);
            prev = m;
        }
        assert!(baseline_cumulative_oracle(&fit, 1.0).is_err());
        // The two-step fit also runs on this tiny fixture.
        let _ = fit_proposed(&c, &z, &spec, &kernel, &SolverConfig::default());
    }

    #[test]
    fn locf_backward_fill_and_fills() {
        let c = fixture();
        let registry = c.registry();
        let s = &c.subjects()[0];
        let src = LocfSource::Visit { col: 0, fill: None };
        let v = |t| locf_value(s, &src, t, PreVisitImputation::BackwardFill, registry, "Z2").unwrap();
        assert_eq!(v(0.1), 1.0);
        assert_eq!(v(1.0), 1.0);
        // The value recorded at 2.0 takes effect just after 2.0.
        assert_eq!(v(2.0), 1.0);
        assert_eq!(v(2.9), 0.0);
        let err = locf_value(s, &src, 0.1, PreVisitImputation::UseFill, registry, "Z2");
        assert!(matches!(err, Err(Error::MissingCovariate { .. })));
        let src = LocfSource::Visit {
            col: 0,
            fill: Some(Fill::Value(0.5)),
        };
        assert_eq!(
            locf_value(s, &src, 0.1, PreVisitImputation::UseFill, registry, "Z2").unwrap(),
            0.5
        );
    }

    #[test]
    fn locf_equals_full_paths_for_constant_covariates() {
        let c = fixture();
        let z = vec!["Z1".to_string()];
        let locf = fit_locf(&c, &z, &LocfOptions::default(), &SolverConfig::default()).unwrap();
        let baseline: Vec<f64> = c.subjects().iter().map(|s| s.baseline.values()[0]).collect();
        let full = fit_full_paths(&c, &z, |i, _, out| out[0] = baseline[i], &SolverConfig::default()).unwrap();
        assert_eq!(locf.beta_hat, full.beta_hat);
        assert_eq!(locf.baseline_cumulative, full.baseline_cumulative);
    }
}
