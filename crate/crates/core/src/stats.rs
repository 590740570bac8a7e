//! Estimates and order-stable reductions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A Monte Carlo measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate {
            value,
            stderr: 0.0,
            n: 0,
            seed: 0,
        }
    }

    /// `|value - target| / stderr`; infinite when the error bar vanishes and
    /// the values differ.
    pub fn pull(&self, target: f64) -> f64 {
        pull(self.value - target, self.stderr)
    }
}

pub fn pull(diff: f64, sigma: f64) -> f64 {
    if sigma > 0.0 {
        diff.abs() / sigma
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

const BLOCK: usize = 64;

/// Pairwise (cascade) summation; the result depends only on the input order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= BLOCK {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

pub fn pairwise_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= BLOCK {
        return a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
    let mid = a.len() / 2;
    pairwise_dot(&a[..mid], &b[..mid]) + pairwise_dot(&a[mid..], &b[mid..])
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(v) / v.len() as f64
}

/// Sample mean with the standard error of the mean.
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    let m = mean(v);
    if n < 2 {
        return (m, f64::INFINITY);
    }
    let dev: Vec<f64> = v.iter().map(|x| (x - m) * (x - m)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

pub fn estimate(v: &[f64], seed: u64) -> Estimate {
    let (value, stderr) = mean_stderr(v);
    Estimate {
        value,
        stderr,
        n: v.len(),
        seed,
    }
}

/// Self-normalized importance estimate `Σ w y / Σ w` with its delta-method
/// standard error. Weights are given as logs.
pub fn weighted_estimate(log_w: &[f64], y: &[f64], seed: u64) -> Estimate {
    let w = normalized_weights(log_w);
    let value = pairwise_dot(&w, y);
    let dev: Vec<f64> = w.iter().zip(y).map(|(wi, yi)| (wi * (yi - value)).powi(2)).collect();
    Estimate {
        value,
        stderr: pairwise_sum(&dev).sqrt(),
        n: y.len(),
        seed,
    }
}

/// `w_i / Σ w` from log-weights, stable under large offsets.
pub fn normalized_weights(log_w: &[f64]) -> Vec<f64> {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let s = pairwise_sum(&w);
    w.into_iter().map(|x| x / s).collect()
}

/// `(Σw)² / Σw²`.
pub fn effective_sample_size(log_w: &[f64]) -> f64 {
    let w = normalized_weights(log_w);
    1.0 / pairwise_dot(&w, &w)
}

/// `log( n^{-1} Σ e^{l_i} )`.
pub fn log_mean_exp(log_w: &[f64]) -> f64 {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    max + (pairwise_sum(&w) / log_w.len() as f64).ln()
}

/// Bootstrap resamples of index sets, reproducible from `seed`.
pub fn bootstrap_indices(n: usize, replicas: usize, seed: u64) -> Vec<Vec<usize>> {
    (0..replicas)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64 + 1);
            (0..n).map(|_| rng.random_range(0..n)).collect()
        })
        .collect()
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pairwise_sum_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        assert_abs_diff_eq!(pairwise_sum(&v), v.iter().sum::<f64>(), epsilon = 1e-11);
    }

    #[test]
    fn weights_normalize() {
        let lw = vec![1000.0, 1001.0, 999.0];
        let w = normalized_weights(&lw);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(effective_sample_size(&[0.0; 10]), 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(log_mean_exp(&[0.0, 0.0]), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn uniform_weights_reduce_to_plain_mean() {
        let y = [1.0, 2.0, 3.0, 6.0];
        let a = weighted_estimate(&[0.0; 4], &y, 0);
        let (m, se) = mean_stderr(&y);
        assert_abs_diff_eq!(a.value, m, epsilon = 1e-15);
        // Delta-method and plain s.e. differ only by the (n-1)/n factor.
        assert_abs_diff_eq!(a.stderr, se * (3.0f64 / 4.0).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn pulls() {
        assert_eq!(pull(0.0, 0.0), 0.0);
        assert!(pull(1.0, 0.0).is_infinite());
        assert_abs_diff_eq!(pull(-2.0, 0.5), 4.0);
    }

    #[test]
    fn fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let (s, c) = linear_fit(&x, &y);
        assert_abs_diff_eq!(s, -0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(c, 2.0, epsilon = 1e-14);
    }
}
