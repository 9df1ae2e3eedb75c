//! Per-node least squares for conditional expectations.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, Mat};
use crate::scalar::{CompensatedSum, Real};

/// Monomials in the state up to a total degree; the first feature is the
/// constant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RegressionBasis {
    pub degree: usize,
    pub state_dim: usize,
    pub exponents: Vec<Vec<u32>>,
}

impl RegressionBasis {
    pub fn new(state_dim: usize, degree: usize) -> Self {
        let mut exponents = Vec::new();
        for total in 0..=degree as u32 {
            let mut current = vec![0u32; state_dim];
            push_compositions(&mut exponents, &mut current, 0, total);
        }
        if exponents.is_empty() {
            exponents.push(vec![0; state_dim]);
        }
        Self {
            degree,
            state_dim,
            exponents,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn features<S: Real>(&self, x: &[S], out: &mut [S]) {
        for (o, e) in out.iter_mut().zip(&self.exponents) {
            *o = e
                .iter()
                .zip(x)
                .fold(S::one(), |acc, (&p, &xi)| acc * xi.powi(p as i32));
        }
    }
}

fn push_compositions(out: &mut Vec<Vec<u32>>, current: &mut [u32], idx: usize, remaining: u32) {
    if idx + 1 >= current.len() {
        if let Some(last) = current.last_mut() {
            *last = remaining;
            out.push(current.to_vec());
        } else if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for take in (0..=remaining).rev() {
        current[idx] = take;
        push_compositions(out, current, idx + 1, remaining - take);
    }
    current[idx] = 0;
}

/// Relative pivot below which the normal equations count as ill-conditioned.
const CONDITION_TOL: f64 = 1e-12;
/// Ridge weight relative to `trace(XᵀX)/dim`.
const RIDGE_SCALE: f64 = 1e-8;

/// Per-component mean and standard deviation (1 when degenerate) of the
/// states. Features are built on the standardized states, which spans the
/// same polynomial space with a far better conditioned Gram matrix.
fn standardization<S: Real>(states: &[&[S]]) -> (Vec<S>, Vec<S>) {
    let n = states.first().map_or(0, |x| x.len());
    let count = S::from_usize_lossy(states.len().max(1));
    let mut mean = vec![S::zero(); n];
    for x in states {
        for (m, &v) in mean.iter_mut().zip(x.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut sd = vec![S::zero(); n];
    for x in states {
        for ((s, &m), &v) in sd.iter_mut().zip(&mean).zip(x.iter()) {
            *s += (v - m) * (v - m);
        }
    }
    for s in &mut sd {
        *s = (*s / count).sqrt();
        if !(*s > S::zero()) {
            *s = S::one();
        }
    }
    (mean, sd)
}

/// Factored normal equations of one node's design matrix.
pub struct Design<S> {
    features: Vec<S>,
    width: usize,
    paths: usize,
    factor: Mat<S>,
    pub ridged: bool,
}

impl<S: Real> Design<S> {
    /// Assembles `XᵀX` in path order and factors it. When it is
    /// ill-conditioned and `ridge` is set, `1e-8·trace/dim` is added to the
    /// non-constant diagonal entries, which leaves the fit of constants exact.
    pub fn new(
        basis: &RegressionBasis,
        states: &[&[S]],
        ridge: bool,
        scenario: usize,
        node: usize,
    ) -> Result<Self> {
        let width = basis.len();
        let paths = states.len();
        let (shift, scale) = standardization(states);
        let mut features = vec![S::zero(); paths * width];
        let mut z = vec![S::zero(); shift.len()];
        for (row, x) in features.chunks_exact_mut(width).zip(states) {
            for (i, zi) in z.iter_mut().enumerate() {
                *zi = (x[i] - shift[i]) / scale[i];
            }
            basis.features(&z, row);
        }
        let mut acc = vec![CompensatedSum::new(); width * width];
        for row in features.chunks_exact(width) {
            for i in 0..width {
                for j in i..width {
                    acc[i * width + j].add(row[i] * row[j]);
                }
            }
        }
        let mut gram = Mat::zeros(width, width);
        for i in 0..width {
            for j in i..width {
                gram[(i, j)] = acc[i * width + j].value();
                gram[(j, i)] = gram[(i, j)];
            }
        }
        let tol = S::lit(CONDITION_TOL);
        let (factor, ridged) = match cholesky(&gram, tol) {
            Some(l) => (l, false),
            None if ridge => {
                let lambda = S::lit(RIDGE_SCALE) * gram.trace() / S::from_usize_lossy(width);
                for i in 1..width {
                    gram[(i, i)] += lambda;
                }
                let l =
                    cholesky(&gram, S::zero()).ok_or(Error::RankDeficient { scenario, node })?;
                (l, true)
            }
            None => return Err(Error::RankDeficient { scenario, node }),
        };
        Ok(Self {
            features,
            width,
            paths,
            factor,
            ridged,
        })
    }

    /// Fitted values of the regression of `targets` (paths × d, path-major)
    /// on the features.
    pub fn fit(&self, targets: &[S], d: usize) -> Vec<S> {
        assert_eq!(targets.len(), self.paths * d, "target length");
        let mut fitted = vec![S::zero(); self.paths * d];
        for c in 0..d {
            let mut acc = vec![CompensatedSum::new(); self.width];
            for (row, t) in self
                .features
                .chunks_exact(self.width)
                .zip(targets.chunks_exact(d))
            {
                for (r, &f) in acc.iter_mut().zip(row) {
                    r.add(f * t[c]);
                }
            }
            let rhs: Vec<S> = acc.iter().map(CompensatedSum::value).collect();
            let beta = cholesky_solve(&self.factor, &rhs);
            for (row, out) in self
                .features
                .chunks_exact(self.width)
                .zip(fitted.chunks_exact_mut(d))
            {
                out[c] = row.iter().zip(&beta).map(|(&f, &b)| f * b).sum();
            }
        }
        fitted
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_sizes() {
        assert_eq!(RegressionBasis::new(1, 2).len(), 3);
        assert_eq!(RegressionBasis::new(2, 2).len(), 6);
        assert_eq!(RegressionBasis::new(2, 0).len(), 1);
        let b = RegressionBasis::new(2, 1);
        assert_eq!(b.exponents[0], vec![0, 0]);
    }

    #[test]
    fn recovers_quadratic_exactly() {
        let basis = RegressionBasis::new(1, 2);
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 10.0 - 1.0]).collect();
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let design = Design::new(&basis, &refs, false, 0, 0).unwrap();
        let y: Vec<f64> = xs
            .iter()
            .map(|x| 1.0 - 2.0 * x[0] + 0.5 * x[0] * x[0])
            .collect();
        let fit = design.fit(&y, 1);
        for (a, b) in fit.iter().zip(&y) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_states_need_ridge() {
        let basis = RegressionBasis::new(1, 2);
        let xs = vec![vec![0.0f64]; 10];
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        assert!(matches!(
            Design::new(&basis, &refs, false, 1, 3),
            Err(Error::RankDeficient {
                scenario: 1,
                node: 3
            })
        ));
        let design = Design::new(&basis, &refs, true, 1, 3).unwrap();
        assert!(design.ridged);
        let fit = design.fit(&[2.5; 10], 1);
        assert!(fit.iter().all(|&v| (v - 2.5).abs() < 1e-14), "{fit:?}");
    }
}
