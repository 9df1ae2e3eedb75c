//! Monte Carlo summaries and small regression helpers.

use serde::Serialize;

use crate::scalar::{compensated_sum, Real};

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate<S> {
    pub mean: S,
    pub stderr: S,
}

impl<S: Real> Estimate<S> {
    pub fn exact(mean: S) -> Self {
        Self {
            mean,
            stderr: S::zero(),
        }
    }

    /// Mean and `std/sqrt(n)` of the samples, with compensated sums in index
    /// order.
    pub fn from_samples(samples: &[S]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self::exact(S::zero());
        }
        let nf = S::from_usize_lossy(n);
        let mean = compensated_sum(samples.iter().copied()) / nf;
        if n == 1 {
            return Self::exact(mean);
        }
        let ss = compensated_sum(samples.iter().map(|&x| (x - mean) * (x - mean)));
        let var = ss / S::from_usize_lossy(n - 1);
        Self {
            mean,
            stderr: (var / nf).sqrt(),
        }
    }

    /// Standard error of the difference of two independent estimates.
    pub fn combined_stderr(&self, other: &Self) -> S {
        (self.stderr * self.stderr + other.stderr * other.stderr).sqrt()
    }
}

/// Least-squares slope of `y` against `x`.
pub fn ols_slope<S: Real>(x: &[S], y: &[S]) -> S {
    assert_eq!(x.len(), y.len());
    let n = S::from_usize_lossy(x.len());
    let mx = x.iter().copied().sum::<S>() / n;
    let my = y.iter().copied().sum::<S>() / n;
    let mut sxy = S::zero();
    let mut sxx = S::zero();
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}

/// Slope of `log|y|` against `log x`; `None` if any `y` is zero or non-finite.
pub fn log_log_slope<S: Real>(x: &[S], y: &[S]) -> Option<S> {
    if y.iter().any(|v| !(v.abs() > S::zero()) || !v.is_finite()) {
        return None;
    }
    let lx: Vec<S> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<S> = y.iter().map(|v| v.abs().ln()).collect();
    Some(ols_slope(&lx, &ly))
}

/// Checks that `values` form a strictly decreasing geometric sequence in `(0, 1)`.
pub fn is_decreasing_geometric<S: Real>(values: &[S]) -> bool {
    if values.iter().any(|&v| !(v > S::zero() && v < S::one())) {
        return false;
    }
    if values.len() < 2 {
        return true;
    }
    let ratio = values[1] / values[0];
    if !(ratio < S::one()) {
        return false;
    }
    let tol = S::lit(1e-9).max(S::epsilon() * S::lit(64.0));
    values
        .windows(2)
        .all(|w| ((w[1] / w[0]) - ratio).abs() <= tol * ratio)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_of_constant_has_zero_stderr() {
        let e = Estimate::from_samples(&[2.0f64; 10]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn estimate_matches_hand_computation() {
        let e = Estimate::from_samples(&[1.0f64, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        // sample variance 5/3, stderr sqrt(5/12)
        assert!((e.stderr - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn slope_of_power_law() {
        let x: Vec<f64> = (3..8).map(|k| 0.5f64.powi(k)).collect();
        let y: Vec<f64> = x.iter().map(|v| 7.0 * v.powi(3)).collect();
        assert!((log_log_slope(&x, &y).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_detection() {
        assert!(is_decreasing_geometric(&[0.5f64, 0.25, 0.125]));
        assert!(!is_decreasing_geometric(&[0.5f64, 0.3, 0.125]));
        assert!(!is_decreasing_geometric(&[1.5f64, 0.75]));
    }
}
