//! Checks shared by the property tests and the acceptance runner. Each
//! returns a description of the first violation.
#![allow(dead_code)]

use recurvis::cohort::{Fill, Subject, VisitKind};
use recurvis::eventfit::{LocfOptions, PreVisitImputation};
use recurvis::smoothing::{kernel_weight, smoothed_moments};
use recurvis::*;

pub type Check = std::result::Result<(), String>;

pub fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

pub fn sim(name: &str, n: usize, rep: usize) -> SimulatedCohort {
    let config = ScenarioConfig {
        n,
        seed: 2024,
        ..scenario_preset(name).unwrap()
    };
    generate_cohort(&config, rep).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64, what: &str) -> Check {
    for (j, (x, y)) in a.iter().zip(b).enumerate() {
        if (x - y).abs() > tol * (1.0 + x.abs().max(y.abs())) {
            return Err(format!("{what}[{j}]: {x} vs {y}"));
        }
    }
    Ok(())
}

fn shifted(cohort: &Cohort, shifts: &[(&str, f64)]) -> Cohort {
    shifts.iter().fold(cohort.clone(), |c, &(name, d)| {
        c.map_covariate(name, |v| v + d).unwrap()
    })
}

fn z_names() -> Vec<String> {
    names(&["Z1", "Z2", "Z3"])
}

fn kernel() -> KernelConfig {
    KernelConfig::default()
}

pub fn locf_time_zero() -> LocfOptions {
    LocfOptions {
        pre_visit: PreVisitImputation::UseFill,
        fills: [("Z2", "Z2_0"), ("Z3", "Z3_0")]
            .into_iter()
            .map(|(name, base)| (name.to_string(), Fill::Baseline { baseline: base.to_string() }))
            .collect(),
    }
}

/// Backward fill, with the time-zero values for subjects who never visit.
pub fn locf_backward_fill() -> LocfOptions {
    LocfOptions {
        pre_visit: PreVisitImputation::BackwardFill,
        ..locf_time_zero()
    }
}

/// The proposed estimator with no history features is the unweighted one.
pub fn proposed_equals_ppl_without_history() -> Check {
    let s = sim("III", 150, 0);
    let solver = SolverConfig::default();
    let a = fit_proposed(&s.cohort, &z_names(), &HistoryFeatureSpec::empty(), &kernel(), &solver)
        .map_err(|e| e.to_string())?;
    let b = fit_ppl(&s.cohort, &z_names(), &kernel(), &solver).map_err(|e| e.to_string())?;
    if a.beta_hat != b.beta_hat {
        return Err(format!("{:?} vs {:?}", a.beta_hat, b.beta_hat));
    }
    if a.baseline_cumulative != b.baseline_cumulative {
        return Err("baseline curves differ".into());
    }
    Ok(())
}

/// Shifting every covariate by a constant leaves all coefficients unchanged.
pub fn translation_invariance() -> Check {
    let solver = SolverConfig::default();
    let s = sim("IX", 200, 1);
    let shifts = [("Z1", 0.7), ("Z2", 0.3), ("Z2_0", 0.3), ("Z3", -1.1), ("Z3_0", -1.1)];
    let moved = shifted(&s.cohort, &shifts);
    let spec = SimulatedCohort::history_spec();
    let z = z_names();
    let fits = |c: &Cohort| -> recurvis::Result<Vec<Vec<f64>>> {
        let p = fit_proposed(c, &z, &spec, &kernel(), &solver)?;
        Ok(vec![
            p.beta_hat,
            p.visit_fit.unwrap().alpha_hat,
            fit_ppl(c, &z, &kernel(), &solver)?.beta_hat,
            fit_locf(c, &z, &locf_time_zero(), &solver)?.beta_hat,
            fit_locf(c, &z, &locf_backward_fill(), &solver)?.beta_hat,
        ])
    };
    let a = fits(&s.cohort).map_err(|e| e.to_string())?;
    let b = fits(&moved).map_err(|e| e.to_string())?;
    for (k, (x, y)) in a.iter().zip(&b).enumerate() {
        close(x, y, 1e-10, &format!("fit {k}"))?;
    }

    let d = sim("Disjoint", 200, 1);
    let partition = DisjointPartition::new(z.clone(), names(&["W"]));
    let moved = shifted(&d.cohort, &[("Z1", -0.4), ("Z2", 2.0), ("Z3", 0.5), ("W", 1.5)]);
    let a = fit_disjoint(&d.cohort, &partition, &kernel(), &solver).map_err(|e| e.to_string())?;
    let b = fit_disjoint(&moved, &partition, &kernel(), &solver).map_err(|e| e.to_string())?;
    close(&a.beta_hat, &b.beta_hat, 1e-10, "disjoint beta")?;
    close(&a.theta_hat, &b.theta_hat, 1e-10, "disjoint theta")
}

/// Scaling `Z1` by `c` divides its event and visit coefficients by `c`.
pub fn scaling_covariance() -> Check {
    let solver = SolverConfig::default();
    let s = sim("II", 200, 2);
    let c = 2.5;
    let scaled = s.cohort.map_covariate("Z1", |v| c * v).unwrap();
    let spec = SimulatedCohort::history_spec();
    let a = fit_proposed(&s.cohort, &z_names(), &spec, &kernel(), &solver).map_err(|e| e.to_string())?;
    let b = fit_proposed(&scaled, &z_names(), &spec, &kernel(), &solver).map_err(|e| e.to_string())?;
    let mut expect_beta = a.beta_hat.clone();
    expect_beta[0] /= c;
    let mut expect_alpha = a.visit_fit.as_ref().unwrap().alpha_hat.clone();
    expect_alpha[0] /= c;
    close(&b.beta_hat, &expect_beta, 1e-9, "beta")?;
    close(&b.visit_fit.as_ref().unwrap().alpha_hat, &expect_alpha, 1e-9, "alpha")
}

/// Smoothed moments against a direct sum over every non-event visit.
pub fn windowed_matches_naive() -> Check {
    let s = sim("IX", 120, 3);
    let spec = SimulatedCohort::history_spec();
    let features = spec.bind(s.cohort.registry()).unwrap();
    let (beta, alpha) = ([0.3, -0.8, 0.6], [-0.4, 0.2, 0.9]);
    let h = 0.45;
    for t in [0.2, 0.9, 1.7, 2.5, 3.3, 4.6] {
        let m = smoothed_moments(&s.cohort, &z_names(), &spec, t, &beta, &alpha, h)
            .map_err(|e| e.to_string())?;
        let mut s0 = 0.0;
        let mut s1 = [0.0; 3];
        for subject in s.cohort.subjects() {
            for v in subject.visits.iter().filter(|v| v.kind == VisitKind::Nonevent) {
                let k = kernel_weight((t - v.time) / h) / h;
                if k == 0.0 {
                    continue;
                }
                let z = [subject.baseline.values()[0], v.covariates.values()[0], v.covariates.values()[1]];
                let x = features.evaluate(subject, v.time);
                let eta: f64 = (0..3).map(|j| beta[j] * z[j] - alpha[j] * x[j]).sum();
                let w = k * eta.exp() / s.cohort.n() as f64;
                s0 += w;
                for j in 0..3 {
                    s1[j] += w * z[j];
                }
            }
        }
        let scale = m.log_scale.exp();
        close(&[m.s0 * scale], &[s0], 1e-12, &format!("S0({t})"))?;
        let s1_windowed: Vec<f64> = m.s1.iter().map(|v| v * scale).collect();
        close(&s1_windowed, &s1, 1e-12, &format!("S1({t})"))?;
    }
    Ok(())
}

/// History features at `t` do not change when visits at or after `t` change.
pub fn history_is_strictly_prior() -> Check {
    let s = sim("III", 60, 4);
    let features = SimulatedCohort::history_spec()
        .bind(s.cohort.registry())
        .unwrap();
    for subject in s.cohort.subjects() {
        for (k, v) in subject.visits.iter().enumerate() {
            let before = features.evaluate(subject, v.time);
            let mut altered: Subject = subject.clone();
            for later in &mut altered.visits[k..] {
                for value in later.covariates.values_mut() {
                    *value += 17.0;
                }
            }
            altered.visits.truncate(k + 1);
            if features.evaluate(&altered, v.time) != before {
                return Err(format!("subject {} at {}", subject.id, v.time));
            }
        }
    }
    Ok(())
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

/// Simulation and bootstrap output is identical for 1 and 3 worker threads.
pub fn thread_count_determinism() -> Check {
    let config = ScenarioConfig {
        n: 100,
        reps: 3,
        seed: 9,
        ..scenario_preset("V").unwrap()
    };
    let methods = [SimMethod::Proposed, SimMethod::Ppl];
    let a = with_threads(1, || run_scenario(&config, &methods, Some(4)).unwrap());
    let b = with_threads(3, || run_scenario(&config, &methods, Some(4)).unwrap());
    if a != b {
        return Err("simulation output depends on thread count".into());
    }
    let s = sim("II", 120, 5);
    let fitter = |c: &Cohort| Ok(fit_ppl(c, &z_names(), &kernel(), &SolverConfig::default())?.beta_hat);
    let a = with_threads(1, || bootstrap(&s.cohort, fitter, 12, 3).unwrap());
    let b = with_threads(3, || bootstrap(&s.cohort, fitter, 12, 3).unwrap());
    if a != b {
        return Err("bootstrap output depends on thread count".into());
    }
    Ok(())
}

/// Baseline cumulative rate curves start at zero and never decrease.
pub fn baseline_monotone() -> Check {
    let s = sim("II", 200, 6);
    let solver = SolverConfig::default();
    let fits = [
        fit_proposed(&s.cohort, &z_names(), &SimulatedCohort::history_spec(), &kernel(), &solver),
        fit_ppl(&s.cohort, &z_names(), &kernel(), &solver),
        fit_full_oracle(&s, &solver),
    ];
    for fit in fits {
        let fit = fit.map_err(|e| e.to_string())?;
        if fit.cumulative_at(0.0) != 0.0 {
            return Err(format!("{}: M(0) = {}", fit.method.as_str(), fit.cumulative_at(0.0)));
        }
        let mut last = 0.0;
        for k in 0..=200 {
            let t = s.cohort.tau() * k as f64 / 200.0;
            let m = fit.cumulative_at(t);
            if m < last {
                return Err(format!("{}: decreases at {t}", fit.method.as_str()));
            }
            last = m;
        }
    }
    Ok(())
}

/// Every solved equation reports a score norm below `1e-8`.
pub fn score_norms_small() -> Check {
    let solver = SolverConfig::default();
    let z = z_names();
    let mut norms = Vec::new();
    for (name, rep) in [("I", 7), ("VI", 7), ("IX", 8)] {
        let s = sim(name, 200, rep);
        let p = fit_proposed(&s.cohort, &z, &SimulatedCohort::history_spec(), &kernel(), &solver)
            .map_err(|e| e.to_string())?;
        norms.push((format!("{name} proposed"), p.score_norm));
        norms.push((format!("{name} visit"), p.visit_fit.as_ref().unwrap().score_norm));
        let q = fit_ppl(&s.cohort, &z, &kernel(), &solver).map_err(|e| e.to_string())?;
        norms.push((format!("{name} ppl"), q.score_norm));
        let l = fit_locf(&s.cohort, &z, &locf_time_zero(), &solver).map_err(|e| e.to_string())?;
        norms.push((format!("{name} locf"), l.score_norm));
        let o = fit_full_oracle(&s, &solver).map_err(|e| e.to_string())?;
        norms.push((format!("{name} oracle"), o.score_norm));
    }
    let d = sim("Disjoint", 200, 9);
    let fit = fit_disjoint(&d.cohort, &DisjointPartition::new(z, names(&["W"])), &kernel(), &solver)
        .map_err(|e| e.to_string())?;
    norms.push(("disjoint beta".into(), fit.score_norms.0));
    norms.push(("disjoint theta".into(), fit.score_norms.1));
    match norms.into_iter().find(|(_, v)| !(*v < 1e-8)) {
        Some((what, v)) => Err(format!("{what}: score norm {v}")),
        None => Ok(()),
    }
}

pub const PROPERTIES: [(&str, fn() -> Check); 9] = [
    ("proposed equals PPL without history", proposed_equals_ppl_without_history),
    ("translation invariance", translation_invariance),
    ("scaling covariance", scaling_covariance),
    ("windowed equals naive smoothing", windowed_matches_naive),
    ("strictly prior history", history_is_strictly_prior),
    ("thread count determinism", thread_count_determinism),
    ("baseline monotone from zero", baseline_monotone),
    ("score norms below 1e-8", score_norms_small),
    ("sliding score equals pointwise", sliding_score_matches_pointwise),
];

/// Score from the sliding pass against the score rebuilt from pointwise
/// weighted means.
pub fn sliding_score_matches_pointwise() -> Check {
    let s = sim("VII", 150, 10);
    let spec = SimulatedCohort::history_spec();
    let (beta, alpha) = ([-0.2, 0.4, 0.1], [0.3, -0.6, 0.2]);
    let k = KernelConfig::fixed(0.5);
    let score = recurvis::eventfit::kernel_score(&s.cohort, &z_names(), &spec, &k, &alpha, &beta)
        .map_err(|e| e.to_string())?;
    let mut direct = [0.0; 3];
    for subject in s.cohort.subjects() {
        for v in subject.visits.iter().filter(|v| v.kind == VisitKind::Event && v.time <= s.cohort.tau()) {
            let z = [subject.baseline.values()[0], v.covariates.values()[0], v.covariates.values()[1]];
            let mean = recurvis::smoothing::weighted_covariate_mean(&s.cohort, &z_names(), &spec, v.time, &beta, &alpha, 0.5)
                .map_err(|e| e.to_string())?;
            for j in 0..3 {
                direct[j] += (z[j] - mean[j]) / s.cohort.n() as f64;
            }
        }
    }
    close(&score, &direct, 1e-10, "score")
}
