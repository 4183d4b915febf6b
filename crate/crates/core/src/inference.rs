//! Nonparametric bootstrap over subjects.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cohort::Cohort;
use crate::error::{Error, Result};

/// Upper 2.5% point of the standard normal distribution.
pub const Z_975: f64 = 1.959963984540054;

/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILED_FRACTION: f64 = 0.10;

/// Data that can be resampled by subject.
pub trait Resample: Sized + Sync {
    fn subject_count(&self) -> usize;
    fn resample(&self, indices: &[usize]) -> Result<Self>;
}

impl Resample for Cohort {
    fn subject_count(&self) -> usize {
        self.n()
    }

    fn resample(&self, indices: &[usize]) -> Result<Self> {
        Cohort::resample(self, indices)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Replicate {
    pub index: usize,
    pub estimate: Option<Vec<f64>>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BootstrapResult {
    /// Fit on the original data.
    pub estimate: Vec<f64>,
    pub replicates: Vec<Replicate>,
    pub se: Vec<f64>,
    pub ci_normal: Vec<(f64, f64)>,
    pub ci_percentile: Vec<(f64, f64)>,
    pub n_failed: usize,
}

impl BootstrapResult {
    pub fn successful(&self) -> impl Iterator<Item = &[f64]> {
        self.replicates.iter().filter_map(|r| r.estimate.as_deref())
    }
}

/// Indices drawn for replicate `r`; a function of `(seed, r)` only.
pub fn resample_indices(seed: u64, replicate: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Sample standard deviation (`n - 1` denominator).
pub fn sample_sd(values: &[f64]) -> f64 {
    let m = values.len() as f64;
    if values.len() < 2 {
        return f64::NAN;
    }
    let mean = values.iter().sum::<f64>() / m;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
}

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * prob;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Refits `fitter` on `b` subject-level resamples of `data`. Replicate
/// failures are recorded and excluded; more than 10% failing aborts.
pub fn bootstrap<D, F>(data: &D, fitter: F, b: usize, seed: u64) -> Result<BootstrapResult>
where
    D: Resample,
    F: Fn(&D) -> Result<Vec<f64>> + Sync,
{
    if b < 2 {
        return Err(Error::InvalidConfig(format!(
            "bootstrap needs at least 2 replicates, got {b}"
        )));
    }
    let estimate = fitter(data)?;
    let n = data.subject_count();
    let replicates: Vec<Replicate> = (0..b)
        .into_par_iter()
        .map(|r| {
            let outcome = data
                .resample(&resample_indices(seed, r, n))
                .and_then(|d| fitter(&d));
            match outcome {
                Ok(est) => Replicate {
                    index: r,
                    estimate: Some(est),
                    failure: None,
                },
                Err(e) => Replicate {
                    index: r,
                    estimate: None,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect();
    summarize(estimate, replicates)
}

/// Standard errors and intervals from a replicate matrix.
pub fn summarize(estimate: Vec<f64>, replicates: Vec<Replicate>) -> Result<BootstrapResult> {
    let total = replicates.len();
    let n_failed = replicates.iter().filter(|r| r.estimate.is_none()).count();
    if n_failed == total {
        return Err(Error::AllReplicatesFailed(total));
    }
    if n_failed as f64 > MAX_FAILED_FRACTION * total as f64 {
        return Err(Error::TooManyFailures {
            failed: n_failed,
            total,
        });
    }
    let p = estimate.len();
    let mut se = Vec::with_capacity(p);
    let mut ci_normal = Vec::with_capacity(p);
    let mut ci_percentile = Vec::with_capacity(p);
    for j in 0..p {
        let mut column: Vec<f64> = replicates
            .iter()
            .filter_map(|r| r.estimate.as_ref().map(|e| e[j]))
            .collect();
        let s = sample_sd(&column);
        se.push(s);
        ci_normal.push((estimate[j] - Z_975 * s, estimate[j] + Z_975 * s));
        column.sort_by(f64::total_cmp);
        ci_percentile.push((quantile_sorted(&column, 0.025), quantile_sorted(&column, 0.975)));
    }
    Ok(BootstrapResult {
        estimate,
        replicates,
        se,
        ci_normal,
        ci_percentile,
        n_failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A list of numbers; the "fit" is their mean.
    #[derive(Debug)]
    struct Sample(Vec<f64>);

    impl Resample for Sample {
        fn subject_count(&self) -> usize {
            self.0.len()
        }
        fn resample(&self, indices: &[usize]) -> Result<Self> {
            Ok(Sample(indices.iter().map(|&i| self.0[i]).collect()))
        }
    }

    fn mean(s: &Sample) -> Result<Vec<f64>> {
        Ok(vec![s.0.iter().sum::<f64>() / s.0.len() as f64])
    }

    #[test]
    fn quantiles_interpolate() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&x, 0.0), 1.0);
        assert_eq!(quantile_sorted(&x, 1.0), 4.0);
        assert!((quantile_sorted(&x, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile_sorted(&x, 0.025) - 1.075).abs() < 1e-12);
    }

    #[test]
    fn sd_matches_definition() {
        assert!((sample_sd(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(sample_sd(&[1.0]).is_nan());
    }

    #[test]
    fn rejects_single_replicate() {
        let s = Sample(vec![1.0, 2.0]);
        assert!(matches!(bootstrap(&s, mean, 1, 0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn standard_error_of_a_mean() {
        let data: Vec<f64> = (0..400).map(|i| (i % 20) as f64).collect();
        let s = Sample(data.clone());
        let res = bootstrap(&s, mean, 400, 11).unwrap();
        let expected = sample_sd(&data) * ((399.0f64) / 400.0).sqrt() / 20.0;
        assert!((res.se[0] / expected - 1.0).abs() < 0.15, "{} vs {}", res.se[0], expected);
        let (lo, hi) = res.ci_normal[0];
        assert!(lo < res.estimate[0] && res.estimate[0] < hi);
        let (plo, phi) = res.ci_percentile[0];
        assert!(plo <= phi);
        let column: Vec<f64> = res.successful().map(|e| e[0]).collect();
        assert_eq!(sample_sd(&column), res.se[0]);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let s = Sample((0..50).map(|i| (i as f64).sin()).collect());
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| bootstrap(&s, mean, 64, 5).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn failure_accounting() {
        let s = Sample((0..30).map(|i| i as f64).collect());
        // Fails whenever the resample misses the value 0 (about 36% of draws).
        let picky = |d: &Sample| {
            if d.0.contains(&0.0) {
                mean(d)
            } else {
                Err(Error::NoEvents)
            }
        };
        match bootstrap(&s, picky, 50, 1) {
            Err(Error::TooManyFailures { failed, total }) => {
                assert_eq!(total, 50);
                assert!(failed > 5);
            }
            other => panic!("unexpected {other:?}"),
        }
        let always = |d: &Sample| if d.0.len() == 30 && d.0.windows(2).all(|w| w[0] < w[1]) { mean(d) } else { Err(Error::NoEvents) };
        assert!(matches!(bootstrap(&s, always, 10, 1), Err(Error::AllReplicatesFailed(10))));
    }

    #[test]
    fn failing_original_fit_stops_early() {
        let s = Sample(vec![1.0, 2.0]);
        let fail = |_: &Sample| -> Result<Vec<f64>> { Err(Error::NoEvents) };
        assert!(matches!(bootstrap(&s, fail, 5, 0), Err(Error::NoEvents)));
    }
}
