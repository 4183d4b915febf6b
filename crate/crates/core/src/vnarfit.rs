//! Joint estimation when the visit rate depends on current covariates that
//! do not enter the event model.
//!
//! With event rate `mu_0(t) exp(beta'Z(t))` and visit rate
//! `lambda_0(t) exp(theta'W(t))`, each process can be smoothed against the
//! other: events are scored against non-event visits weighted by
//! `exp(beta'Z - theta'W)` (`U4`), and non-event visits are scored against
//! events weighted by `exp(theta'W - beta'Z)` (`U5`). The stacked system is
//! just identified for `(beta, theta)`.

use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, VisitKind};
use crate::error::{Error, Result};
use crate::smoothing::{resolve_bandwidth, KernelConfig, SmoothingDesign, ZeroDenominatorPolicy};
use crate::solver::{damped_step, newton, sup_norm, EstimatingEquation, Evaluation, SolverConfig};

/// Correlation above which a `(Z, W)` pair is reported.
pub const COLLINEARITY_THRESHOLD: f64 = 0.95;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisjointPartition {
    pub z_names: Vec<String>,
    pub w_names: Vec<String>,
}

impl DisjointPartition {
    pub fn new(z_names: Vec<String>, w_names: Vec<String>) -> Self {
        Self { z_names, w_names }
    }

    pub fn validate(&self, cohort: &Cohort) -> Result<()> {
        if self.z_names.is_empty() || self.w_names.is_empty() {
            return Err(Error::InvalidConfig(
                "disjoint partition needs at least one event and one visit covariate".into(),
            ));
        }
        if let Some(shared) = self.z_names.iter().find(|z| self.w_names.contains(z)) {
            return Err(Error::InvalidConfig(format!(
                "covariate `{shared}` appears in both the event and the visit model"
            )));
        }
        cohort.registry().slots(&self.z_names)?;
        cohort.registry().slots(&self.w_names)?;
        Ok(())
    }

    pub fn swapped(&self) -> Self {
        Self::new(self.w_names.clone(), self.z_names.clone())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DisjointFit {
    pub partition: DisjointPartition,
    pub beta_hat: Vec<f64>,
    pub theta_hat: Vec<f64>,
    /// Sup-norms of `U4` and `U5` at the solution.
    pub score_norms: (f64, f64),
    pub iterations: usize,
    pub bandwidth: f64,
    pub warnings: Vec<String>,
}

/// One equation of the system with the other block's coefficients held fixed.
struct Block<'a> {
    design: &'a SmoothingDesign,
    other: &'a [f64],
    h: f64,
    policy: ZeroDenominatorPolicy,
}

impl EstimatingEquation for Block<'_> {
    fn dim(&self) -> usize {
        self.design.p()
    }

    fn evaluate(&self, own: &[f64]) -> Result<Evaluation> {
        let pass = self.design.score_pass(own, self.other, self.h, self.policy)?;
        Ok(Evaluation {
            objective: pass.objective,
            score: pass.score,
            jacobian: pass.jacobian,
        })
    }
}

fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let m = pairs.len() as f64;
    let (mx, my) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x / m, b + y / m));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Pairs of event and visit covariates whose values across all visits are
/// nearly collinear.
pub fn collinearity_warnings(cohort: &Cohort, partition: &DisjointPartition) -> Result<Vec<String>> {
    let registry = cohort.registry();
    let mut out = Vec::new();
    for z in &partition.z_names {
        let zs = registry.slot(z)?;
        for w in &partition.w_names {
            let ws = registry.slot(w)?;
            let pairs: Vec<(f64, f64)> = cohort
                .subjects()
                .iter()
                .flat_map(|s| (0..s.visits.len()).map(move |k| (s.value_at_visit(zs, k), s.value_at_visit(ws, k))))
                .filter(|(a, b)| a.is_finite() && b.is_finite())
                .collect();
            if pairs.len() < 3 {
                continue;
            }
            let r = pearson(&pairs);
            if r.is_finite() && r.abs() > COLLINEARITY_THRESHOLD {
                out.push(format!(
                    "`{z}` and `{w}` are nearly collinear (r = {r:.3}); their coefficients may be highly variable"
                ));
            }
        }
    }
    Ok(out)
}

/// Solves `U4 = 0`, `U5 = 0` by alternating damped Newton steps in `beta`
/// and `theta`, from the two unweighted kernel fits.
pub fn fit_disjoint(
    cohort: &Cohort,
    partition: &DisjointPartition,
    kernel: &KernelConfig,
    solver: &SolverConfig,
) -> Result<DisjointFit> {
    partition.validate(cohort)?;
    solver.validate()?;
    let h = resolve_bandwidth(kernel, cohort.n())?;
    let policy = kernel.zero_denominator;
    let events = SmoothingDesign::two_process(cohort, VisitKind::Event, &partition.z_names, &partition.w_names)?;
    let visits = SmoothingDesign::two_process(cohort, VisitKind::Nonevent, &partition.w_names, &partition.z_names)?;
    if events.event_times().is_empty() {
        return Err(Error::NoEvents);
    }
    if visits.event_times().is_empty() {
        return Err(Error::NoNonEventVisits);
    }
    let p = partition.z_names.len();
    let q = partition.w_names.len();
    let zero_theta = vec![0.0; q];
    let zero_beta = vec![0.0; p];
    let mut beta = newton(
        &Block { design: &events, other: &zero_theta, h, policy },
        solver,
        solver.start(p)?,
    )?
    .estimate;
    let mut theta = newton(
        &Block { design: &visits, other: &zero_beta, h, policy },
        solver,
        vec![0.0; q],
    )?
    .estimate;

    let mut used_fd = false;
    let cap = solver.max_iterations * 4;
    let mut iterations = 0;
    loop {
        let eval_b = Block { design: &events, other: &theta, h, policy }.evaluate(&beta)?;
        let eval_t = Block { design: &visits, other: &beta, h, policy }.evaluate(&theta)?;
        let (nb, nt) = (eval_b.score_norm(), eval_t.score_norm());
        if nb < solver.tolerance && nt < solver.tolerance {
            return Ok(DisjointFit {
                partition: partition.clone(),
                beta_hat: beta,
                theta_hat: theta,
                score_norms: (nb, nt),
                iterations,
                bandwidth: h,
                warnings: collinearity_warnings(cohort, partition)?,
            });
        }
        let stalled = |theta_now: Vec<f64>, beta_now: Vec<f64>| Error::NonConvergence {
            iterations,
            score_norm: nb.max(nt),
            estimate: beta_now.into_iter().chain(theta_now).collect(),
        };
        if iterations >= cap || !(nb.is_finite() && nt.is_finite()) {
            return Err(stalled(theta, beta));
        }
        if nb >= solver.tolerance {
            let block = Block { design: &events, other: &theta, h, policy };
            match damped_step(&block, &beta, &eval_b, solver, iterations, &mut used_fd)? {
                Some((next, _)) => beta = next,
                None => return Err(stalled(theta, beta)),
            }
        }
        let block = Block { design: &visits, other: &beta, h, policy };
        let eval_t = block.evaluate(&theta)?;
        if sup_norm(&eval_t.score) >= solver.tolerance {
            match damped_step(&block, &theta, &eval_t, solver, iterations, &mut used_fd)? {
                Some((next, _)) => theta = next,
                None => return Err(stalled(theta, beta)),
            }
        }
        iterations += 1;
    }
}
