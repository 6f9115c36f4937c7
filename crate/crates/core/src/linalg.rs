//! Dense row-major matrices and the decompositions the solvers need.
//!
//! Everything here is deterministic: parallel kernels split work by output
//! row and every reduction runs in a fixed sequential order, so results are
//! bitwise reproducible regardless of thread count.

use std::fmt;
use std::ops::{Index, IndexMut};

use rayon::prelude::*;

use crate::error::{LfaError, Result};
use crate::scalar::Real;

/// Work (multiply-adds) above which matrix products fan out over rayon.
const PAR_THRESHOLD: usize = 1 << 16;

/// Maximum number of one-sided Jacobi sweeps before giving up.
const MAX_SWEEPS: usize = 100;

#[derive(Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Mat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            writeln!(f, "  {:?}", &row[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LfaError::ShapeMismatch(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. Panics on ragged input; meant for
    /// literals and tests.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn diag(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
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
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(LfaError::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn column_means(&self) -> Vec<T> {
        let mut acc = vec![T::zero(); self.cols];
        for r in self.row_iter() {
            for (a, &v) in acc.iter_mut().zip(r) {
                *a += v;
            }
        }
        let n = T::of_usize(self.rows.max(1));
        acc.into_iter().map(|a| a / n).collect()
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(LfaError::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let (n, p) = (self.cols, other.cols);
        let mut out = Self::zeros(self.rows, p);
        if p == 0 {
            return Ok(out);
        }
        let kernel = |(r, dst): (usize, &mut [T])| {
            let a = self.row(r);
            for (k, &aik) in a.iter().enumerate().take(n) {
                if aik == T::zero() {
                    continue;
                }
                for (d, &b) in dst.iter_mut().zip(other.row(k)) {
                    *d += aik * b;
                }
            }
        };
        if self.rows * n * p >= PAR_THRESHOLD {
            out.data.par_chunks_mut(p).enumerate().for_each(kernel);
        } else {
            out.data.chunks_mut(p).enumerate().for_each(kernel);
        }
        Ok(out)
    }

    /// `selfᵀ · other`, reducing over rows in index order.
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(LfaError::ShapeMismatch(format!(
                "cannot form ({}x{})ᵀ · {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let p = other.cols;
        let mut out = Self::zeros(self.cols, p);
        if p == 0 {
            return Ok(out);
        }
        let kernel = |(a, dst): (usize, &mut [T])| {
            for i in 0..self.rows {
                let xia = self[(i, a)];
                if xia == T::zero() {
                    continue;
                }
                for (d, &g) in dst.iter_mut().zip(other.row(i)) {
                    *d += xia * g;
                }
            }
        };
        if self.rows * self.cols * p >= PAR_THRESHOLD {
            out.data.par_chunks_mut(p).enumerate().for_each(kernel);
        } else {
            out.data.chunks_mut(p).enumerate().for_each(kernel);
        }
        Ok(out)
    }

    /// Converts element type, e.g. widening `f32` payloads to `f64`.
    pub fn cast<U: Real>(&self) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.f64()).unwrap_or_else(U::nan))
                .collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn l2_distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt()
}

/// `row · m` for a single row vector.
pub fn vec_matmul<T: Real>(v: &[T], m: &Mat<T>) -> Vec<T> {
    let mut out = vec![T::zero(); m.cols()];
    for (k, &vk) in v.iter().enumerate() {
        if vk == T::zero() {
            continue;
        }
        for (o, &b) in out.iter_mut().zip(m.row(k)) {
            *o += vk * b;
        }
    }
    out
}

/// Singular value decomposition `m = U · diag(sigma) · Vᵀ`.
///
/// For an `r x c` input with `r >= c` (the thin case) `u` is `r x c` with
/// orthonormal columns; square inputs get a fully orthogonal `u`. `sigma` is
/// sorted in nonincreasing order.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Mat<T>,
    pub sigma: Vec<T>,
    pub v: Mat<T>,
}

impl<T: Real> Svd<T> {
    pub fn reconstruct(&self) -> Mat<T> {
        let k = self.sigma.len();
        let us = Mat::from_fn(self.u.rows(), k, |r, c| self.u[(r, c)] * self.sigma[c]);
        us.matmul(&self.v.transpose()).expect("consistent factors")
    }
}

/// SVD of a square matrix with fully orthogonal factors.
pub fn svd<T: Real>(m: &Mat<T>) -> Result<Svd<T>> {
    if m.rows() != m.cols() {
        return Err(LfaError::ShapeMismatch(format!(
            "svd expects a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    svd_thin(m)
}

/// One-sided (Hestenes) Jacobi SVD for `rows >= cols`.
///
/// Columns whose singular value is negligible get orthonormal completions, so
/// `u` always has orthonormal columns even for rank-deficient input.
pub fn svd_thin<T: Real>(m: &Mat<T>) -> Result<Svd<T>> {
    let (rows, n) = m.shape();
    if rows < n {
        return Err(LfaError::ShapeMismatch(format!(
            "svd_thin expects rows >= cols, got {rows}x{n}"
        )));
    }
    if !m.is_finite() {
        return Err(LfaError::InvalidConfig("svd input has non-finite entries".into()));
    }
    // Columns of m become contiguous rows of `a`.
    let mut a = m.transpose();
    let mut v = Mat::<T>::identity(n);
    // Off-diagonal threshold relative to the column norms; a bare epsilon can
    // stall on rounding noise.
    let tol = T::epsilon() * T::of_usize(rows);

    let mut converged = n < 2;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(LfaError::ConvergenceFailure { sweeps });
        }
        sweeps += 1;
        converged = true;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (ap, aq) = (a.row(p), a.row(q));
                    (dot(ap, ap), dot(aq, aq), dot(ap, aq))
                };
                if alpha == T::zero() || beta == T::zero() {
                    continue;
                }
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut a, p, q, c, s);
                rotate_rows(&mut v, p, q, c, s);
            }
        }
    }

    let mut sigma: Vec<T> = (0..n).map(|p| norm(a.row(p))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap().then(i.cmp(&j)));

    let vt = v; // rows of `vt` are right singular vectors
    let smax = order.first().map_or(T::zero(), |&i| sigma[i]);
    let negligible = smax * T::epsilon() * T::of_usize(rows.max(n));

    let mut u_cols: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut v_out = Mat::zeros(n, n);
    let mut sig_out = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (k, &p) in order.iter().enumerate() {
        let s = sigma[p];
        for r in 0..n {
            v_out[(r, k)] = vt[(p, r)];
        }
        if s > negligible && s > T::zero() {
            u_cols.push(a.row(p).iter().map(|&x| x / s).collect());
        } else {
            u_cols.push(vec![T::zero(); rows]);
            deficient.push(k);
        }
        sig_out.push(s);
    }
    for &k in &deficient {
        sig_out[k] = sigma[order[k]].max(T::zero());
        u_cols[k] = complete_basis(&u_cols, k, rows);
    }
    sigma = sig_out;

    let u = Mat::from_fn(rows, n, |r, c| u_cols[c][r]);
    Ok(Svd {
        u,
        sigma,
        v: v_out,
    })
}

fn rotate_rows<T: Real>(m: &mut Mat<T>, p: usize, q: usize, c: T, s: T) {
    let cols = m.cols();
    let data = m.as_mut_slice();
    let (head, tail) = data.split_at_mut(q * cols);
    let rp = &mut head[p * cols..(p + 1) * cols];
    let rq = &mut tail[..cols];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// A unit vector orthogonal to every nonzero column in `cols` other than `skip`.
fn complete_basis<T: Real>(cols: &[Vec<T>], skip: usize, dim: usize) -> Vec<T> {
    let mut best: Option<(T, Vec<T>)> = None;
    for e in 0..dim {
        let mut cand = vec![T::zero(); dim];
        cand[e] = T::one();
        // Two passes of Gram-Schmidt keep the result orthogonal to working precision.
        for _ in 0..2 {
            for (j, c) in cols.iter().enumerate() {
                if j == skip || c.iter().all(|&x| x == T::zero()) {
                    continue;
                }
                let proj = dot(&cand, c);
                for (x, &y) in cand.iter_mut().zip(c) {
                    *x -= proj * y;
                }
            }
        }
        let nrm = norm(&cand);
        if nrm > T::of(0.5) {
            return cand.into_iter().map(|x| x / nrm).collect();
        }
        if best.as_ref().is_none_or(|(b, _)| nrm > *b) {
            best = Some((nrm, cand));
        }
    }
    let (nrm, cand) = best.expect("dim > 0");
    cand.into_iter().map(|x| x / nrm).collect()
}

/// Relative singular value cutoff below which directions are treated as null.
pub const PINV_RCOND: f64 = 1e-10;

/// Moore-Penrose pseudoinverse via truncated SVD.
pub fn pinv<T: Real>(m: &Mat<T>) -> Result<Mat<T>> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(Mat::zeros(cols, rows));
    }
    // For wide inputs decompose the transpose: m = V Σ Uᵀ.
    let wide = rows < cols;
    let svd = if wide {
        svd_thin(&m.transpose())?
    } else {
        svd_thin(m)?
    };
    let smax = svd.sigma.first().copied().unwrap_or(T::zero());
    let cutoff = smax * T::of(PINV_RCOND);
    let k = svd.sigma.len();
    let inv: Vec<T> = svd
        .sigma
        .iter()
        .map(|&s| if s > cutoff && s > T::zero() { T::one() / s } else { T::zero() })
        .collect();
    // tall: m⁺ = V Σ⁺ Uᵀ ; wide: m⁺ = U Σ⁺ Vᵀ
    let (left, right) = if wide { (&svd.u, &svd.v) } else { (&svd.v, &svd.u) };
    let scaled = Mat::from_fn(left.rows(), k, |r, c| left[(r, c)] * inv[c]);
    scaled.matmul(&right.transpose())
}
