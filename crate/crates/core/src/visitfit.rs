//! Cox-type model for the non-event visit process.
//!
//! The visit rate is `exp(alpha'X(t)) lambda_0(t)` with `X(t)` built from
//! history strictly before `t`. `alpha` solves the partial score
//! `n^-1 sum_i sum_{V_ik <= tau} {X_i(V_ik) - Xbar(V_ik, alpha)} = 0` over the
//! non-event visit times, with risk sets `{j : C_j >= u}`. The baseline rate
//! is then estimated by kernel smoothing the visit counts divided by the
//! fitted risk-set totals.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::cohort::{Cohort, HistoryFeatureSpec, VisitKind};
use crate::error::{Error, Result};
use crate::smoothing::{dot, kernel_weight};
use crate::solver::{newton, EstimatingEquation, Evaluation, SolverConfig};

/// Fitted visit model.
#[derive(Clone, Debug, Serialize)]
pub struct VisitModelFit {
    pub feature_names: Vec<String>,
    pub alpha_hat: Vec<f64>,
    pub score_norm: f64,
    pub iterations: usize,
    pub log_pseudo_likelihood: f64,
    /// `(t, lambda_0(t))` on an evenly spaced grid over `[0, tau]`; empty
    /// until a bandwidth is supplied through [`VisitModelFit::fill_baseline_grid`].
    pub baseline_grid: Vec<(f64, f64)>,
    #[serde(skip)]
    pub rate: BaselineVisitRate,
}

impl VisitModelFit {
    pub fn fill_baseline_grid(&mut self, h: f64, tau: f64, points: usize) {
        let points = points.max(2);
        self.baseline_grid = (0..points)
            .map(|k| {
                let t = tau * k as f64 / (points - 1) as f64;
                (t, self.rate.at(t, h))
            })
            .collect();
    }
}

/// Kernel estimator of the baseline visit rate: the non-event visit times
/// and the fitted risk-set totals at each of them.
#[derive(Clone, Debug, Default)]
pub struct BaselineVisitRate {
    times: Vec<f64>,
    log_denominators: Vec<f64>,
}

impl BaselineVisitRate {
    /// `lambda_0(max(t, h))`.
    pub fn at(&self, t: f64, h: f64) -> f64 {
        let tc = t.max(h);
        let lo = self.times.partition_point(|&u| u <= tc - h);
        let hi = self.times.partition_point(|&u| u < tc + h);
        (lo..hi.max(lo))
            .map(|k| kernel_weight((tc - self.times[k]) / h) / h * (-self.log_denominators[k]).exp())
            .sum()
    }

    pub fn ln_at(&self, t: f64, h: f64) -> f64 {
        self.at(t, h).ln()
    }
}

/// Subjects ordered by decreasing censoring time, so every risk set is a prefix.
struct VisitDesign {
    n: usize,
    q: usize,
    censor_desc: Vec<f64>,
    /// Visit times per subject (all kinds), in `censor_desc` order.
    breaks: Vec<Vec<f64>>,
    /// `X` per inter-visit segment, flat `(visits + 1) x q`.
    segments: Vec<Vec<f64>>,
    /// Non-event visits sorted by time: (time, subject position, segment row).
    visits: Vec<(f64, usize, usize)>,
    /// Number of entries of `visits` with time <= tau.
    scored: usize,
}

struct RiskSums {
    s0: f64,
    s1: Vec<f64>,
    s2: Vec<f64>,
    shift: f64,
}

impl VisitDesign {
    fn new(cohort: &Cohort, spec: &HistoryFeatureSpec) -> Result<Self> {
        let features = spec.bind(cohort.registry())?;
        let q = features.dim();
        let mut order: Vec<usize> = (0..cohort.n()).collect();
        order.sort_by(|&a, &b| {
            cohort.subjects()[b]
                .censor_time
                .total_cmp(&cohort.subjects()[a].censor_time)
        });
        let mut censor_desc = Vec::with_capacity(order.len());
        let mut breaks = Vec::with_capacity(order.len());
        let mut segments = Vec::with_capacity(order.len());
        let mut visits = Vec::new();
        for (pos, &i) in order.iter().enumerate() {
            let s = &cohort.subjects()[i];
            let seg = features.segments(s);
            if let Some(k) = seg.iter().position(|v| v.is_nan()) {
                let row = k / q.max(1);
                return Err(Error::MissingCovariate {
                    subject: s.id.clone(),
                    name: features.names()[k % q.max(1)].clone(),
                    time: if row == 0 { 0.0 } else { s.visits[row - 1].time },
                });
            }
            for v in s.visits.iter().filter(|v| v.kind == VisitKind::Nonevent) {
                visits.push((v.time, pos, s.visits_before(v.time)));
            }
            censor_desc.push(s.censor_time);
            breaks.push(s.visits.iter().map(|v| v.time).collect());
            segments.push(seg);
        }
        visits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let scored = visits.partition_point(|v| v.0 <= cohort.tau());
        Ok(Self {
            n: cohort.n(),
            q,
            censor_desc,
            breaks,
            segments,
            visits,
            scored,
        })
    }

    fn x(&self, pos: usize, row: usize) -> &[f64] {
        &self.segments[pos][row * self.q..(row + 1) * self.q]
    }

    /// Calls `f(group, sums)` for each run of tied visit times among the
    /// first `upto` visits.
    fn sweep(
        &self,
        alpha: &[f64],
        upto: usize,
        second: bool,
        mut f: impl FnMut(&[(f64, usize, usize)], &RiskSums),
    ) {
        let q = self.q;
        let eta: Vec<Vec<f64>> = self
            .segments
            .iter()
            .zip(&self.breaks)
            .map(|(seg, b)| {
                if q == 0 {
                    vec![0.0; b.len() + 1]
                } else {
                    seg.chunks(q).map(|x| dot(alpha, x)).collect()
                }
            })
            .collect();
        let shift = eta
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut ptr = vec![0usize; self.n];
        let mut start = 0;
        while start < upto {
            let u = self.visits[start].0;
            let mut end = start + 1;
            while end < upto && self.visits[end].0 == u {
                end += 1;
            }
            let at_risk = self.censor_desc.partition_point(|&c| c >= u);
            let mut sums = RiskSums {
                s0: 0.0,
                s1: vec![0.0; q],
                s2: vec![0.0; if second { q * q } else { 0 }],
                shift,
            };
            for j in 0..at_risk {
                let b = &self.breaks[j];
                while ptr[j] < b.len() && b[ptr[j]] < u {
                    ptr[j] += 1;
                }
                let w = (eta[j][ptr[j]] - shift).exp();
                sums.s0 += w;
                let x = self.x(j, ptr[j]);
                for a in 0..q {
                    sums.s1[a] += w * x[a];
                    if second {
                        for c in 0..=a {
                            sums.s2[a * q + c] += w * x[a] * x[c];
                        }
                    }
                }
            }
            if second {
                for a in 0..q {
                    for c in 0..a {
                        sums.s2[c * q + a] = sums.s2[a * q + c];
                    }
                }
            }
            f(&self.visits[start..end], &sums);
            start = end;
        }
    }

    fn log_denominators(&self, alpha: &[f64]) -> BaselineVisitRate {
        let mut times = Vec::with_capacity(self.visits.len());
        let mut log_denominators = Vec::with_capacity(self.visits.len());
        self.sweep(alpha, self.visits.len(), false, |group, sums| {
            for v in group {
                times.push(v.0);
                log_denominators.push(sums.s0.ln() + sums.shift);
            }
        });
        BaselineVisitRate {
            times,
            log_denominators,
        }
    }
}

impl EstimatingEquation for VisitDesign {
    fn dim(&self) -> usize {
        self.q
    }

    fn evaluate(&self, alpha: &[f64]) -> Result<Evaluation> {
        let q = self.q;
        let mut score = vec![0.0; q];
        let mut jac = DMatrix::zeros(q, q);
        let mut objective = 0.0;
        self.sweep(alpha, self.scored, true, |group, sums| {
            let log_s0 = sums.s0.ln() + sums.shift;
            for &(_, pos, row) in group {
                let x = self.x(pos, row);
                objective += dot(alpha, x) - log_s0;
                for a in 0..q {
                    let ma = sums.s1[a] / sums.s0;
                    score[a] += x[a] - ma;
                    for c in 0..q {
                        jac[(a, c)] -= sums.s2[a * q + c] / sums.s0 - ma * sums.s1[c] / sums.s0;
                    }
                }
            }
        });
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

/// Fits the visit model by damped Newton from `alpha = 0`.
pub fn fit_visit_model(
    cohort: &Cohort,
    spec: &HistoryFeatureSpec,
    solver: &SolverConfig,
) -> Result<VisitModelFit> {
    let design = VisitDesign::new(cohort, spec)?;
    if design.scored == 0 {
        return Err(Error::NoNonEventVisits);
    }
    let solution = newton(&design, solver, vec![0.0; design.q])?;
    let rate = design.log_denominators(&solution.estimate);
    Ok(VisitModelFit {
        feature_names: spec.bind(cohort.registry())?.names().to_vec(),
        alpha_hat: solution.estimate,
        score_norm: solution.score_norm,
        iterations: solution.iterations,
        log_pseudo_likelihood: solution.objective,
        baseline_grid: Vec::new(),
        rate,
    })
}

/// Baseline rate of the visit process with no history features.
pub(crate) fn unweighted_rate(cohort: &Cohort) -> Result<BaselineVisitRate> {
    Ok(VisitDesign::new(cohort, &HistoryFeatureSpec::empty())?.log_denominators(&[]))
}

/// Partial score of the visit model at `alpha` (diagnostic re-evaluation).
pub fn visit_score(cohort: &Cohort, spec: &HistoryFeatureSpec, alpha: &[f64]) -> Result<Vec<f64>> {
    let design = VisitDesign::new(cohort, spec)?;
    if alpha.len() != design.q {
        return Err(Error::InvalidConfig(format!(
            "alpha has length {}, expected {}",
            alpha.len(),
            design.q
        )));
    }
    Ok(design.evaluate(alpha)?.score)
}

/// Kernel estimate of the baseline visit rate at `t` given `alpha_hat`.
pub fn baseline_visit_rate(
    cohort: &Cohort,
    spec: &HistoryFeatureSpec,
    alpha_hat: &[f64],
    h: f64,
    t: f64,
) -> Result<f64> {
    let design = VisitDesign::new(cohort, spec)?;
    if alpha_hat.len() != design.q {
        return Err(Error::InvalidConfig(format!(
            "alpha has length {}, expected {}",
            alpha_hat.len(),
            design.q
        )));
    }
    Ok(design.log_denominators(alpha_hat).at(t, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{CovariateRegistry, HistoryRule, Subject, Visit};
    use crate::smoothing::visit_mean;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp};

    fn poisson_times(rng: &mut ChaCha8Rng, rate: f64, horizon: f64) -> Vec<f64> {
        let exp = Exp::new(rate).unwrap();
        let mut t = 0.0;
        let mut out = Vec::new();
        loop {
            t += exp.sample(rng);
            if t > horizon {
                return out;
            }
            out.push(t);
        }
    }

    /// Arm A visits at rate 2, arm B at rate 1, follow-up 5.
    fn two_arm(seed: u64, n: usize) -> Cohort {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let registry = CovariateRegistry::new(vec!["arm".into()], vec![]).unwrap();
        let subjects = (0..n)
            .map(|i| {
                let arm = (i % 2) as f64;
                let visits = poisson_times(&mut rng, 1.0 + arm, 5.0)
                    .into_iter()
                    .map(|t| Visit {
                        time: t,
                        kind: VisitKind::Nonevent,
                        covariates: vec![].into(),
                    })
                    .collect();
                Subject {
                    id: format!("s{i}"),
                    censor_time: 5.0,
                    baseline: vec![arm].into(),
                    visits,
                }
            })
            .collect();
        Cohort::new(subjects, registry, None).unwrap()
    }

    fn arm_spec() -> HistoryFeatureSpec {
        HistoryFeatureSpec::new(vec![HistoryRule::Baseline { name: "arm".into() }])
    }

    #[test]
    fn recovers_log_rate_ratio() {
        let c = two_arm(20240601, 2000);
        let fit = fit_visit_model(&c, &arm_spec(), &SolverConfig::default()).unwrap();
        assert!((fit.alpha_hat[0] - 2f64.ln()).abs() < 0.07, "{:?}", fit.alpha_hat);
        assert!(fit.score_norm < 1e-8);
        let rescored = visit_score(&c, &arm_spec(), &fit.alpha_hat).unwrap();
        assert!((rescored[0].abs() - fit.score_norm).abs() < 1e-12);
    }

    #[test]
    fn null_model_has_empty_alpha() {
        let c = two_arm(1, 20);
        let fit = fit_visit_model(&c, &HistoryFeatureSpec::empty(), &SolverConfig::default()).unwrap();
        assert!(fit.alpha_hat.is_empty());
        assert_eq!(fit.score_norm, 0.0);
        assert_eq!(fit.iterations, 0);
    }

    #[test]
    fn constant_feature_is_singular() {
        let c = two_arm(2, 50).map_covariate("arm", |_| 1.0).unwrap();
        assert!(matches!(
            fit_visit_model(&c, &arm_spec(), &SolverConfig::default()),
            Err(Error::SingularJacobian { .. })
        ));
    }

    #[test]
    fn homogeneous_baseline_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let registry = CovariateRegistry::new(vec![], vec![]).unwrap();
        let subjects = (0..2000)
            .map(|i| Subject {
                id: format!("s{i}"),
                censor_time: 5.0,
                baseline: vec![].into(),
                visits: poisson_times(&mut rng, 1.0, 5.0)
                    .into_iter()
                    .map(|t| Visit {
                        time: t,
                        kind: VisitKind::Nonevent,
                        covariates: vec![].into(),
                    })
                    .collect(),
            })
            .collect();
        let c = Cohort::new(subjects, registry, None).unwrap();
        let spec = HistoryFeatureSpec::empty();
        for t in [1.0, 2.5, 4.0] {
            let rate = baseline_visit_rate(&c, &spec, &[], 0.3, t).unwrap();
            assert!((rate - 1.0).abs() < 0.1, "rate {rate} at {t}");
        }
        let mut doubled = c.subjects().to_vec();
        doubled.extend(c.subjects().iter().cloned());
        let d = Cohort::new(doubled, c.registry().clone(), None).unwrap();
        let a = baseline_visit_rate(&c, &spec, &[], 0.3, 2.0).unwrap();
        let b = baseline_visit_rate(&d, &spec, &[], 0.3, 2.0).unwrap();
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn empty_window_rate_is_zero() {
        let c = two_arm(3, 4);
        let fit = fit_visit_model(&c, &HistoryFeatureSpec::empty(), &SolverConfig::default()).unwrap();
        assert_eq!(fit.rate.at(50.0, 0.1), 0.0);
    }

    #[test]
    fn score_uses_risk_set_mean() {
        // The sweep's risk-set mean agrees with the direct definition.
        let c = two_arm(5, 30);
        let spec = HistoryFeatureSpec::new(vec![
            HistoryRule::Baseline { name: "arm".into() },
            HistoryRule::AnyPriorVisit,
        ]);
        let alpha = [0.3, -0.2];
        let design = VisitDesign::new(&c, &spec).unwrap();
        let features = spec.bind(c.registry()).unwrap();
        let mut score = [0.0; 2];
        for s in c.subjects() {
            for v in s.visits.iter().filter(|v| v.kind == VisitKind::Nonevent) {
                let x = features.evaluate(s, v.time);
                let mean = visit_mean(&c, &spec, v.time, &alpha).unwrap();
                score[0] += x[0] - mean[0];
                score[1] += x[1] - mean[1];
            }
        }
        let got = design.evaluate(&alpha).unwrap().score;
        for a in 0..2 {
            assert!((got[a] - score[a] / 30.0).abs() < 1e-12);
        }
    }
}
