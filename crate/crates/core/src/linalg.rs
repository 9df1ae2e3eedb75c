//! Small dense matrices.
//!
//! State and control dimensions are tiny (usually 1 or 2), so a row-major
//! buffer with a handful of operations covers everything the solvers need.
//! Matrices with at most four entries live inline.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use smallvec::SmallVec;

use crate::scalar::{dot, norm_sq, Real};

/// Short vector stored inline up to length 4.
pub type Coords<S> = SmallVec<[S; 4]>;

/// `len` zeros, inline when they fit.
fn zeroed<S: Real>(len: usize) -> SmallVec<[S; 4]> {
    if len <= 4 {
        let mut v = SmallVec::from_buf([S::zero(); 4]);
        v.truncate(len);
        v
    } else {
        SmallVec::from_vec(vec![S::zero(); len])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: SmallVec<[S; 4]>,
}

impl<S: Real> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: zeroed(rows * cols),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    /// Builds a matrix from row-major data.
    ///
    /// # Panics
    /// If `data.len() != rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length");
        Self {
            rows,
            cols,
            data: SmallVec::from_vec(data),
        }
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = SmallVec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    /// Single-entry matrix.
    pub fn scalar(v: S) -> Self {
        Self::from_row_major(1, 1, vec![v])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data.into_vec()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul_vec(&self, v: &[S]) -> Coords<S> {
        assert_eq!(v.len(), self.cols, "matrix-vector shape");
        let mut out = zeroed(self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            *o = dot(row, v);
        }
        out
    }

    /// Elementwise `f(self, rhs)`.
    fn zip_with(&self, rhs: &Self, f: impl Fn(S, S) -> S) -> Self {
        let mut out = Self::zeros(self.rows, self.cols);
        for ((o, &a), &b) in out.data.iter_mut().zip(&self.data).zip(&rhs.data) {
            *o = f(a, b);
        }
        out
    }

    /// `vᵀ M w`.
    pub fn bilinear(&self, v: &[S], w: &[S]) -> S {
        assert_eq!(v.len(), self.rows, "bilinear shape");
        assert_eq!(w.len(), self.cols, "bilinear shape");
        let mut acc = S::zero();
        for (i, &vi) in v.iter().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            acc += vi * crate::scalar::dot(row, w);
        }
        acc
    }

    pub fn scale(&self, k: S) -> Self {
        let mut out = Self::zeros(self.rows, self.cols);
        for (o, &a) in out.data.iter_mut().zip(&self.data) {
            *o = a * k;
        }
        out
    }

    pub fn max_abs(&self) -> S {
        crate::scalar::max_abs(&self.data)
    }

    pub fn frobenius(&self) -> S {
        crate::scalar::norm_sq(&self.data).sqrt()
    }

    pub fn trace(&self) -> S {
        (0..self.rows.min(self.cols)).fold(S::zero(), |acc, i| acc + self[(i, i)])
    }

    /// `(M + Mᵀ)/2`.
    pub fn symmetrized(&self) -> Self {
        assert_eq!(self.rows, self.cols, "symmetrize needs a square matrix");
        let half = S::lit(0.5);
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                s[(i, j)] = half * (self[(i, j)] + self[(j, i)]);
            }
        }
        s
    }

    pub fn asymmetry(&self) -> S {
        let mut worst = S::zero();
        for i in 0..self.rows {
            for j in 0..self.cols.min(self.rows) {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Inverse and determinant by Gauss-Jordan elimination with partial pivoting.
    /// Returns `None` for a singular matrix (zero pivot).
    pub fn inverse_with_det(&self) -> Option<(Self, S)> {
        assert_eq!(self.rows, self.cols, "inverse needs a square matrix");
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        let mut det = S::one();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| {
                    a[(i, col)]
                        .abs()
                        .partial_cmp(&a[(j, col)].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(col);
            let p = a[(pivot, col)];
            if p == S::zero() || !p.is_finite() {
                return None;
            }
            if pivot != col {
                a.swap_rows(pivot, col);
                inv.swap_rows(pivot, col);
                det = -det;
            }
            det *= p;
            let p_inv = S::one() / p;
            for j in 0..n {
                a[(col, j)] *= p_inv;
                inv[(col, j)] *= p_inv;
            }
            for i in 0..n {
                if i == col {
                    continue;
                }
                let factor = a[(i, col)];
                if factor == S::zero() {
                    continue;
                }
                for j in 0..n {
                    let aj = a[(col, j)];
                    let ij = inv[(col, j)];
                    a[(i, j)] -= factor * aj;
                    inv[(i, j)] -= factor * ij;
                }
            }
        }
        Some((inv, det))
    }

    fn swap_rows(&mut self, r1: usize, r2: usize) {
        if r1 == r2 {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(r1 * self.cols + j, r2 * self.cols + j);
        }
    }
}

impl<S> Index<(usize, usize)> for Mat<S> {
    type Output = S;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> IndexMut<(usize, usize)> for Mat<S> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

impl<S: Real> Mul for &Mat<S> {
    type Output = Mat<S>;
    fn mul(self, rhs: &Mat<S>) -> Mat<S> {
        assert_eq!(self.cols, rhs.rows, "matrix product shape");
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == S::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl<S: Real> Add for &Mat<S> {
    type Output = Mat<S>;
    fn add(self, rhs: &Mat<S>) -> Mat<S> {
        assert_eq!(self.shape(), rhs.shape(), "matrix sum shape");
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl<S: Real> Sub for &Mat<S> {
    type Output = Mat<S>;
    fn sub(self, rhs: &Mat<S>) -> Mat<S> {
        assert_eq!(self.shape(), rhs.shape(), "matrix difference shape");
        self.zip_with(rhs, |a, b| a - b)
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
///
/// Fails when a pivot drops below `rel_tol` times the largest diagonal entry,
/// which is how rank deficiency of a normal-equation matrix shows up.
pub fn cholesky<S: Real>(a: &Mat<S>, rel_tol: S) -> Option<Mat<S>> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "cholesky needs a square matrix");
    let scale = (0..n).fold(S::zero(), |m, i| m.max(a[(i, i)].abs()));
    if scale == S::zero() {
        return None;
    }
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > rel_tol * scale) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the Cholesky factor `L`.
pub fn cholesky_solve<S: Real>(l: &Mat<S>, b: &[S]) -> Vec<S> {
    let n = l.rows();
    let mut y = vec![S::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = vec![S::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Left inverse `L` (cols × rows) of a full-column-rank `a`, so that
/// `L y` is the least-squares solution of `a x ≈ y`.
///
/// Columns are normalized and orthogonalized by Gram–Schmidt with one
/// reorthogonalization pass; `None` when a column is numerically dependent.
pub fn least_squares_operator<S: Real>(a: &Mat<S>) -> Option<Mat<S>> {
    let (rows, cols) = a.shape();
    if cols > rows {
        return None;
    }
    let mut q: Vec<Vec<S>> = Vec::with_capacity(cols);
    let mut r = Mat::zeros(cols, cols);
    let mut scale = vec![S::one(); cols];
    for j in 0..cols {
        let mut col: Vec<S> = (0..rows).map(|i| a[(i, j)]).collect();
        let norm = norm_sq(&col).sqrt();
        if !(norm > S::zero()) || !norm.is_finite() {
            return None;
        }
        scale[j] = norm;
        col.iter_mut().for_each(|c| *c /= norm);
        for _ in 0..2 {
            for (k, qk) in q.iter().enumerate() {
                let proj = dot(qk, &col);
                r[(k, j)] += proj;
                for (c, &b) in col.iter_mut().zip(qk) {
                    *c -= proj * b;
                }
            }
        }
        let rest = norm_sq(&col).sqrt();
        if !(rest > S::lit(1e-12)) {
            return None;
        }
        r[(j, j)] = rest;
        col.iter_mut().for_each(|c| *c /= rest);
        q.push(col);
    }
    let mut out = Mat::zeros(cols, rows);
    for i in 0..rows {
        let mut x = vec![S::zero(); cols];
        for j in (0..cols).rev() {
            let mut s = q[j][i];
            for k in (j + 1)..cols {
                s -= r[(j, k)] * x[k];
            }
            x[j] = s / r[(j, j)];
        }
        for j in 0..cols {
            out[(j, i)] = x[j] / scale[j];
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_squares_recovers_a_polynomial() {
        let xs = [0.25, 0.125, 0.0625, 0.03125, 0.015625];
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x, x * x, x * x * x]).collect();
        let l = least_squares_operator(&Mat::from_rows(&rows)).unwrap();
        let y: Vec<f64> = xs
            .iter()
            .map(|&x| 0.3 * x - 0.5 * x * x + 2.0 * x * x * x)
            .collect();
        let c = l.mul_vec(&y);
        assert!(
            (c[0] - 0.3).abs() < 1e-12 && (c[1] + 0.5).abs() < 1e-11 && (c[2] - 2.0).abs() < 1e-10
        );
        let dependent = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]);
        assert!(least_squares_operator(&dependent).is_none());
    }

    #[test]
    fn inverse_roundtrip() {
        let m = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let (inv, det) = m.inverse_with_det().unwrap();
        assert!((det - 5.0f64).abs() < 1e-14);
        let prod = &m * &inv;
        assert!((&prod - &Mat::identity(2)).max_abs() < 1e-14);
    }

    #[test]
    fn inverse_needs_pivoting() {
        let m = Mat::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let (inv, det) = m.inverse_with_det().unwrap();
        assert_eq!(det, -1.0);
        assert_eq!(inv, m);
    }

    #[test]
    fn singular_matrix_has_no_inverse() {
        let m = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(m.inverse_with_det().is_none());
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let a = Mat::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]);
        let l = cholesky(&a, 1e-14).unwrap();
        let x = cholesky_solve(&l, &[2.0, 1.0]);
        let back = a.mul_vec(&x);
        assert!((back[0] - 2.0f64).abs() < 1e-14 && (back[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cholesky_rejects_rank_deficiency() {
        let a = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert!(cholesky(&a, 1e-12).is_none());
    }

    #[test]
    fn symmetrize_is_exactly_symmetric() {
        let m = Mat::from_rows(&[vec![1.0, 2.0], vec![4.0, 3.0]]).symmetrized();
        assert_eq!(m.asymmetry(), 0.0);
        assert_eq!(m[(0, 1)], 3.0);
    }
}
