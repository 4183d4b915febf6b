//! Damped Newton iteration for estimating equations that are the gradient of
//! a concave pseudo log-likelihood.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Convergence threshold on the sup-norm of the score.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_step_halvings: usize,
    /// Starting value; zero vector when absent.
    pub initial_beta: Option<Vec<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 50,
            max_step_halvings: 20,
            initial_beta: None,
        }
    }
}

impl SolverConfig {
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "solver tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }

    pub(crate) fn start(&self, dim: usize) -> Result<Vec<f64>> {
        match &self.initial_beta {
            None => Ok(vec![0.0; dim]),
            Some(v) if v.len() == dim => Ok(v.clone()),
            Some(v) => Err(Error::InvalidConfig(format!(
                "initial value has length {}, expected {dim}",
                v.len()
            ))),
        }
    }
}

/// Objective, score (its gradient) and the score's Jacobian at one point.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub objective: f64,
    pub score: Vec<f64>,
    pub jacobian: DMatrix<f64>,
}

impl Evaluation {
    pub fn score_norm(&self) -> f64 {
        sup_norm(&self.score)
    }
}

pub trait EstimatingEquation {
    fn dim(&self) -> usize;
    fn evaluate(&self, theta: &[f64]) -> Result<Evaluation>;
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub estimate: Vec<f64>,
    pub score: Vec<f64>,
    pub score_norm: f64,
    pub objective: f64,
    pub iterations: usize,
    /// Some Newton step fell back to a finite-difference Jacobian.
    pub used_finite_differences: bool,
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn is_singular(m: &DMatrix<f64>) -> bool {
    if m.iter().any(|v| !v.is_finite()) {
        return true;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    max <= 1e-300 || min <= 1e-12 * max
}

fn central_difference_jacobian(
    eq: &impl EstimatingEquation,
    theta: &[f64],
) -> Result<DMatrix<f64>> {
    let p = theta.len();
    let mut jac = DMatrix::zeros(p, p);
    let mut probe = theta.to_vec();
    for j in 0..p {
        let step = 1e-5 * (1.0 + theta[j].abs());
        probe[j] = theta[j] + step;
        let plus = eq.evaluate(&probe)?.score;
        probe[j] = theta[j] - step;
        let minus = eq.evaluate(&probe)?.score;
        probe[j] = theta[j];
        for i in 0..p {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}

/// Newton direction `-J^{-1} U`, falling back to a finite-difference Jacobian
/// when the analytic one is singular.
fn direction(
    eq: &impl EstimatingEquation,
    theta: &[f64],
    eval: &Evaluation,
    iteration: usize,
    used_fd: &mut bool,
) -> Result<Vec<f64>> {
    let mut jac = eval.jacobian.clone();
    if is_singular(&jac) {
        jac = central_difference_jacobian(eq, theta)?;
        *used_fd = true;
        if is_singular(&jac) {
            return Err(Error::SingularJacobian { iteration });
        }
    }
    let rhs = -DVector::from_column_slice(&eval.score);
    let step = jac
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularJacobian { iteration })?;
    Ok(step.iter().copied().collect())
}

/// One damped Newton step from `theta`. The step is halved until the
/// objective does not decrease.
pub(crate) fn damped_step(
    eq: &impl EstimatingEquation,
    theta: &[f64],
    current: &Evaluation,
    config: &SolverConfig,
    iteration: usize,
    used_fd: &mut bool,
) -> Result<Option<(Vec<f64>, Evaluation)>> {
    let dir = direction(eq, theta, current, iteration, used_fd)?;
    let old_norm = current.score_norm();
    let slack = 1e-13 * (1.0 + current.objective.abs());
    let mut scale = 1.0;
    for _ in 0..=config.max_step_halvings {
        let candidate: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + scale * d).collect();
        match eq.evaluate(&candidate) {
            Ok(eval) if eval.objective.is_finite() => {
                let improves = eval.objective >= current.objective
                    || (eval.objective >= current.objective - slack
                        && eval.score_norm() < old_norm);
                if improves {
                    return Ok(Some((candidate, eval)));
                }
            }
            Ok(_) => {}
            Err(e) if e.is_numerical() => {}
            Err(e) => return Err(e),
        }
        scale *= 0.5;
    }
    Ok(None)
}

/// Solves `U(theta) = 0` from `start`.
pub fn newton(
    eq: &impl EstimatingEquation,
    config: &SolverConfig,
    start: Vec<f64>,
) -> Result<Solution> {
    config.validate()?;
    let mut theta = start;
    let mut eval = eq.evaluate(&theta)?;
    let mut used_fd = false;
    let mut iterations = 0;
    loop {
        let norm = eval.score_norm();
        if !norm.is_finite() {
            return Err(Error::NonConvergence {
                iterations,
                score_norm: norm,
                estimate: theta,
            });
        }
        if norm < config.tolerance {
            // A root with a singular Jacobian is not identified.
            if !theta.is_empty() && is_singular(&eval.jacobian) {
                return Err(Error::SingularJacobian { iteration: iterations });
            }
            return Ok(Solution {
                estimate: theta,
                score: eval.score,
                score_norm: norm,
                objective: eval.objective,
                iterations,
                used_finite_differences: used_fd,
            });
        }
        if iterations >= config.max_iterations {
            return Err(Error::NonConvergence {
                iterations,
                score_norm: norm,
                estimate: theta,
            });
        }
        match damped_step(eq, &theta, &eval, config, iterations, &mut used_fd)? {
            Some((next, next_eval)) => {
                theta = next;
                eval = next_eval;
                iterations += 1;
            }
            None => {
                return Err(Error::NonConvergence {
                    iterations,
                    score_norm: norm,
                    estimate: theta,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Concave objective sum(a_j x_j - exp(x_j)); root at x_j = ln a_j.
    struct LogExp(Vec<f64>);

    impl EstimatingEquation for LogExp {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
            let p = self.0.len();
            let mut jac = DMatrix::zeros(p, p);
            let mut objective = 0.0;
            let mut score = vec![0.0; p];
            for j in 0..p {
                objective += self.0[j] * x[j] - x[j].exp();
                score[j] = self.0[j] - x[j].exp();
                jac[(j, j)] = -x[j].exp();
            }
            Ok(Evaluation {
                objective,
                score,
                jacobian: jac,
            })
        }
    }

    struct Flat;

    impl EstimatingEquation for Flat {
        fn dim(&self) -> usize {
            1
        }
        fn evaluate(&self, _: &[f64]) -> Result<Evaluation> {
            Ok(Evaluation {
                objective: 0.0,
                score: vec![1.0],
                jacobian: DMatrix::zeros(1, 1),
            })
        }
    }

    #[test]
    fn converges_from_far_start_with_step_halving() {
        let eq = LogExp(vec![2.0, 0.1]);
        let sol = newton(&eq, &SolverConfig::default(), vec![8.0, -6.0]).unwrap();
        assert!((sol.estimate[0] - 2f64.ln()).abs() < 1e-8);
        assert!((sol.estimate[1] - 0.1f64.ln()).abs() < 1e-7);
        assert!(sol.score_norm < 1e-8);
    }

    #[test]
    fn empty_problem_is_solved_immediately() {
        let eq = LogExp(vec![]);
        let sol = newton(&eq, &SolverConfig::default(), vec![]).unwrap();
        assert!(sol.estimate.is_empty());
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn singular_jacobian_is_reported() {
        assert!(matches!(
            newton(&Flat, &SolverConfig::default(), vec![0.0]),
            Err(Error::SingularJacobian { .. })
        ));
    }

    #[test]
    fn iteration_cap_is_reported() {
        let eq = LogExp(vec![2.0]);
        let config = SolverConfig {
            max_iterations: 1,
            ..SolverConfig::default()
        };
        assert!(matches!(
            newton(&eq, &config, vec![5.0]),
            Err(Error::NonConvergence { .. })
        ));
    }
}
