//! Refinement objectives over mapped embeddings `z_i = x_i·W` and their
//! hand-derived gradients with respect to `W`.
//!
//! Every loss is a batch mean. Mined sets (nearest incorrect prototypes, CSLS
//! neighborhoods) are recomputed from the current `z` and held constant under
//! differentiation. The per-sample gradient rows `∂L/∂z_i` are reduced into
//! `∂L/∂W = Xᵀ·G` in sample order.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LfaError, Result};
use crate::linalg::{dot, l2_distance, norm, Mat};
use crate::scalar::Real;
use crate::types::PrototypeMatrix;

/// Below this norm a difference vector has no defined direction; its unit
/// direction is taken as zero.
pub const DIRECTION_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Arerank,
    Contrastive,
    Triplet,
    Csls,
}

impl FromStr for LossKind {
    type Err = LfaError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "arerank" => Ok(LossKind::Arerank),
            "contrastive" => Ok(LossKind::Contrastive),
            "triplet" => Ok(LossKind::Triplet),
            "csls" => Ok(LossKind::Csls),
            other => Err(LfaError::UnsupportedVariant(other.to_string())),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Arerank => "arerank",
            LossKind::Contrastive => "contrastive",
            LossKind::Triplet => "triplet",
            LossKind::Csls => "csls",
        })
    }
}

/// Hyperparameters consumed by the loss functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    /// Mined neighbor count (incorrect prototypes, or CSLS neighborhood size).
    pub k: usize,
    /// Divisor of the adaptive margin.
    pub s: f64,
    /// Softmax temperature of the contrastive and CSLS cross-entropies.
    pub tau: f64,
    /// Fixed margin of the triplet baseline.
    pub triplet_margin: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            k: 3,
            s: 4.0,
            tau: 0.05,
            triplet_margin: 0.25,
        }
    }
}

/// `(1 − y_gtᵀ·y_other) / s`.
pub fn adaptive_margin<T: Real>(y: &PrototypeMatrix<T>, gt_class: usize, other_class: usize, s: T) -> T {
    (T::one() - dot(y.row(gt_class), y.row(other_class))) / s
}

/// The `k` incorrect classes closest (ℓ2) to `xw`, nearest first; ties go to the
/// lower class index. Returns all `C − 1` incorrect classes when `k` exceeds that.
pub fn nearest_prototypes<T: Real>(xw: &[T], y: &PrototypeMatrix<T>, gt_class: usize, k: usize) -> Vec<usize> {
    let dists: Vec<T> = (0..y.num_classes()).map(|j| l2_distance(xw, y.row(j))).collect();
    nearest_from_distances(&dists, gt_class, k)
}

fn nearest_from_distances<T: Real>(dists: &[T], gt_class: usize, k: usize) -> Vec<usize> {
    let mut others: Vec<usize> = (0..dists.len()).filter(|&j| j != gt_class).collect();
    others.sort_by(|&a, &b| {
        dists[a]
            .partial_cmp(&dists[b])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    others.truncate(k);
    others
}

fn unit_or_zero<T: Real>(v: &[T]) -> (T, Vec<T>) {
    let n = norm(v);
    if n < T::of(DIRECTION_EPS) {
        (n, vec![T::zero(); v.len()])
    } else {
        (n, v.iter().map(|&a| a / n).collect())
    }
}

fn diff<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

fn check_inputs<T: Real>(x: &Mat<T>, labels: &[usize], w: &Mat<T>, y: &PrototypeMatrix<T>) -> Result<()> {
    if labels.len() != x.rows() {
        return Err(LfaError::LengthMismatch {
            left: labels.len(),
            right: x.rows(),
        });
    }
    if x.cols() != w.rows() || w.rows() != w.cols() || w.cols() != y.dim() {
        return Err(LfaError::DimensionMismatch(format!(
            "x {}x{}, W {}x{}, prototypes d = {}",
            x.rows(),
            x.cols(),
            w.rows(),
            w.cols(),
            y.dim()
        )));
    }
    crate::types::check_labels(labels, y.num_classes())
}

/// Margin rule of the hinge family.
#[derive(Clone, Copy)]
enum Margin<T> {
    Adaptive(T),
    Fixed(T),
}

/// Per-sample hinge loss and `∂loss/∂z` (unscaled by the batch size).
fn hinge_sample<T: Real>(z: &[T], gt: usize, y: &PrototypeMatrix<T>, k: usize, margin: Margin<T>) -> (T, Vec<T>) {
    let c = y.num_classes();
    let dists: Vec<T> = (0..c).map(|j| l2_distance(z, y.row(j))).collect();
    let neighbors = nearest_from_distances(&dists, gt, k);
    let k_eff = T::of_usize(neighbors.len().max(1));
    let (d_ii, u_ii) = unit_or_zero(&diff(z, y.row(gt)));
    let mut loss = T::zero();
    let mut g = vec![T::zero(); z.len()];
    for &j in &neighbors {
        let m = match margin {
            Margin::Adaptive(s) => adaptive_margin(y, gt, j, s),
            Margin::Fixed(m) => m,
        };
        let l = d_ii - dists[j] + m;
        if l > T::zero() {
            loss += l;
            let (_, u_ij) = unit_or_zero(&diff(z, y.row(j)));
            for ((gv, &a), &b) in g.iter_mut().zip(&u_ii).zip(&u_ij) {
                *gv += a - b;
            }
        }
    }
    for gv in g.iter_mut() {
        *gv /= k_eff;
    }
    (loss / k_eff, g)
}

fn hinge_family<T: Real>(
    x: &Mat<T>,
    labels: &[usize],
    w: &Mat<T>,
    y: &PrototypeMatrix<T>,
    k: usize,
    margin: Margin<T>,
    want_grad: bool,
) -> Result<(T, Option<Mat<T>>)> {
    check_inputs(x, labels, w, y)?;
    let z = x.matmul(w)?;
    let n = x.rows();
    let per_sample: Vec<(T, Vec<T>)> = (0..n)
        .into_par_iter()
        .map(|i| hinge_sample(z.row(i), labels[i], y, k, margin))
        .collect();
    finish(x, per_sample, want_grad)
}

/// Sums per-sample losses in index order, scales by `1/N` and forms `Xᵀ·G`.
fn finish<T: Real>(x: &Mat<T>, per_sample: Vec<(T, Vec<T>)>, want_grad: bool) -> Result<(T, Option<Mat<T>>)> {
    let n = x.rows();
    let inv_n = T::one() / T::of_usize(n.max(1));
    let mut loss = T::zero();
    let mut g = Mat::zeros(n, x.cols());
    for (i, (l, gi)) in per_sample.into_iter().enumerate() {
        loss += l;
        if want_grad {
            for (dst, v) in g.row_mut(i).iter_mut().zip(gi) {
                *dst = v * inv_n;
            }
        }
    }
    let grad = if want_grad { Some(x.t_matmul(&g)?) } else { None };
    Ok((loss * inv_n, grad))
}

/// Adaptive reranking loss: mean over samples of
/// `(1/k)·Σ_{j ∈ N_k} max(d_ii − d_ij + m_ij, 0)`, with `d` the ℓ2 distance of
/// `x_i·W` to a prototype and `m_ij = (1 − y_{c_i}ᵀ·y_j)/s`.
pub fn arerank_loss<T: Real>(x: &Mat<T>, labels: &[usize], w: &Mat<T>, y: &PrototypeMatrix<T>, k: usize, s: T) -> Result<T> {
    Ok(hinge_family(x, labels, w, y, k, Margin::Adaptive(s), false)?.0)
}

/// Subgradient of [`arerank_loss`] with respect to `W`.
pub fn arerank_grad<T: Real>(x: &Mat<T>, labels: &[usize], w: &Mat<T>, y: &PrototypeMatrix<T>, k: usize, s: T) -> Result<Mat<T>> {
    Ok(hinge_family(x, labels, w, y, k, Margin::Adaptive(s), true)?
        .1
        .expect("gradient requested"))
}

/// Cosine of `z` with a unit vector `y`, and its gradient with respect to `z`.
fn cosine_and_grad<T: Real>(z: &[T], z_norm: T, y: &[T]) -> (T, Vec<T>) {
    if z_norm < T::of(DIRECTION_EPS) {
        return (T::zero(), vec![T::zero(); z.len()]);
    }
    let cos = dot(z, y) / z_norm;
    let inv = T::one() / z_norm;
    let g = z
        .iter()
        .zip(y)
        .map(|(&a, &b)| b * inv - cos * a * inv * inv)
        .collect();
    (cos, g)
}

fn log_softmax_parts<T: Real>(logits: &[T]) -> (T, Vec<T>) {
    let mx = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let exps: Vec<T> = logits.iter().map(|&v| (v - mx).exp()).collect();
    let total: T = exps.iter().copied().sum();
    let lse = mx + total.ln();
    (lse, exps.into_iter().map(|e| e / total).collect())
}

fn contrastive<T: Real>(x: &Mat<T>, labels: &[usize], w: &Mat<T>, y: &PrototypeMatrix<T>, tau: T) -> Result<(T, Mat<T>)> {
    check_inputs(x, labels, w, y)?;
    let z = x.matmul(w)?;
    let c = y.num_classes();
    let per_sample: Vec<(T, Vec<T>)> = (0..x.rows())
        .into_par_iter()
        .map(|i| {
            let zi = z.row(i);
            let zn = norm(zi);
            let parts: Vec<(T, Vec<T>)> = (0..c).map(|j| cosine_and_grad(zi, zn, y.row(j))).collect();
            let logits: Vec<T> = parts.iter().map(|(cs, _)| *cs / tau).collect();
            let (lse, p) = log_softmax_parts(&logits);
            let loss = lse - logits[labels[i]];
            let mut g = vec![T::zero(); zi.len()];
            for (j, (_, dcos)) in parts.iter().enumerate() {
                let coef = (p[j] - if j == labels[i] { T::one() } else { T::zero() }) / tau;
                for (gv, &dv) in g.iter_mut().zip(dcos) {
                    *gv += coef * dv;
                }
            }
            (loss, g)
        })
        .collect();
    let (loss, grad) = finish(x, per_sample, true)?;
    Ok((loss, grad.expect("gradient requested")))
}

/// Mean cosine of each prototype to its `k` most similar mapped embeddings,
/// with the neighbor index lists. Ties go to the lower sample index.
pub fn csls_neighborhoods<T: Real>(cos: &Mat<T>, k: usize) -> (Vec<T>, Vec<Vec<usize>>) {
    let (n, c) = cos.shape();
    let k_eff = k.min(n).max(1);
    let mut r = Vec::with_capacity(c);
    let mut sets = Vec::with_capacity(c);
    for j in 0..c {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| {
            cos[(b, j)]
                .partial_cmp(&cos[(a, j)])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        idx.truncate(k_eff);
        r.push(idx.iter().map(|&i| cos[(i, j)]).sum::<T>() / T::of_usize(k_eff));
        sets.push(idx);
    }
    (r, sets)
}

fn csls<T: Real>(x: &Mat<T>, labels: &[usize], w: &Mat<T>, y: &PrototypeMatrix<T>, k: usize, tau: T) -> Result<(T, Mat<T>)> {
    check_inputs(x, labels, w, y)?;
    let z = x.matmul(w)?;
    let (n, c) = (x.rows(), y.num_classes());
    let parts: Vec<Vec<(T, Vec<T>)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let zi = z.row(i);
            let zn = norm(zi);
            (0..c).map(|j| cosine_and_grad(zi, zn, y.row(j))).collect()
        })
        .collect();
    let cos = Mat::from_fn(n, c, |i, j| parts[i][j].0);
    let (r, hoods) = csls_neighborhoods(&cos, k);
    let k_eff = T::of_usize(k.min(n).max(1));
    let two = T::of(2.0);
    let inv_n = T::one() / T::of_usize(n);

    // dL/dscore_ij, already divided by the batch size
    let mut dscore = Mat::zeros(n, c);
    let mut loss = T::zero();
    for i in 0..n {
        let logits: Vec<T> = (0..c).map(|j| (two * cos[(i, j)] - r[j]) / tau).collect();
        let (lse, p) = log_softmax_parts(&logits);
        loss += lse - logits[labels[i]];
        for j in 0..c {
            let delta = if j == labels[i] { T::one() } else { T::zero() };
            dscore[(i, j)] = (p[j] - delta) / tau * inv_n;
        }
    }
    // dL/dcos_ij = 2·dscore_ij − [i ∈ hood_j]·(1/k)·Σ_i' dscore_i'j
    let mut dcos = dscore.scale(two);
    for j in 0..c {
        let col_sum: T = (0..n).map(|i| dscore[(i, j)]).sum();
        for &i in &hoods[j] {
            dcos[(i, j)] -= col_sum / k_eff;
        }
    }
    let mut g = Mat::zeros(n, x.cols());
    for i in 0..n {
        let row = g.row_mut(i);
        for (j, (_, dc)) in parts[i].iter().enumerate() {
            let coef = dcos[(i, j)];
            for (gv, &dv) in row.iter_mut().zip(dc) {
                *gv += coef * dv;
            }
        }
    }
    Ok((loss * inv_n, x.t_matmul(&g)?))
}

/// One of the non-ARerank comparison losses, with its gradient.
///
/// * `contrastive`: cross-entropy over cosines `cos(x_i·W, y_j)/τ`.
/// * `triplet`: the hinge of [`arerank_loss`] with a fixed margin.
/// * `csls`: cross-entropy over `(2·cos(x_i·W, y_j) − r_j)/τ`, where `r_j` is
///   the mean cosine of `y_j` to its `k` most similar mapped embeddings.
pub fn baseline_loss<T: Real>(
    variant: LossKind,
    x: &Mat<T>,
    labels: &[usize],
    w: &Mat<T>,
    y: &PrototypeMatrix<T>,
    params: &LossParams,
) -> Result<(T, Mat<T>)> {
    match variant {
        LossKind::Contrastive => contrastive(x, labels, w, y, T::of(params.tau)),
        LossKind::Triplet => {
            let (l, g) = hinge_family(x, labels, w, y, params.k, Margin::Fixed(T::of(params.triplet_margin)), true)?;
            Ok((l, g.expect("gradient requested")))
        }
        LossKind::Csls => csls(x, labels, w, y, params.k, T::of(params.tau)),
        LossKind::Arerank => Err(LfaError::UnsupportedVariant(
            "arerank is not a baseline loss".into(),
        )),
    }
}

/// Loss and gradient for any variant.
pub fn loss_and_grad<T: Real>(
    variant: LossKind,
    x: &Mat<T>,
    labels: &[usize],
    w: &Mat<T>,
    y: &PrototypeMatrix<T>,
    params: &LossParams,
) -> Result<(T, Mat<T>)> {
    match variant {
        LossKind::Arerank => {
            let (l, g) = hinge_family(x, labels, w, y, params.k, Margin::Adaptive(T::of(params.s)), true)?;
            Ok((l, g.expect("gradient requested")))
        }
        other => baseline_loss(other, x, labels, w, y, params),
    }
}
