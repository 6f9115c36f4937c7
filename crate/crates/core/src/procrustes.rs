//! Closed-form mapping solvers: unconstrained least squares, orthogonal
//! Procrustes and the β-regularized pull toward the identity.

use serde::{Deserialize, Serialize};

use crate::error::{LfaError, Result};
use crate::linalg::{pinv, svd, Mat};
use crate::scalar::Real;
use crate::types::{FeatureMatrix, LinearMap, MapKind};

/// Cross-covariance norm below which the orthogonal solution is not unique.
pub const DEGENERATE_CROSS_NORM: f64 = 1e-12;

/// Interpolation weight between the orthogonal solution (`0`) and identity (`1`).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct BetaParam(f64);

impl BetaParam {
    pub fn new(beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(LfaError::InvalidConfig(format!("beta must lie in [0, 1], got {beta}")));
        }
        Ok(Self(beta))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for BetaParam {
    type Error = LfaError;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BetaParam> for f64 {
    fn from(b: BetaParam) -> f64 {
        b.0
    }
}

/// Minimum-norm `W` minimizing `‖source·W − target‖_F²`, via the truncated
/// pseudoinverse of `source`.
pub fn least_squares_map<T: Real>(source: &Mat<T>, target: &Mat<T>) -> Result<LinearMap<T>> {
    if source.shape() != target.shape() {
        return Err(LfaError::ShapeMismatch(format!(
            "source {}x{} vs target {}x{}",
            source.rows(),
            source.cols(),
            target.rows(),
            target.cols()
        )));
    }
    let w = pinv(source)?.matmul(target)?;
    LinearMap::new(w, MapKind::LeastSquares)
}

/// Orthogonal `W` minimizing `‖X·W − target‖_F²`: `W = U·Vᵀ` from `svd(Xᵀ·target)`.
///
/// `target` is the already-assigned prototype stack `P·Y`, so hard labels and
/// soft transport plans share this entry point.
pub fn orthogonal_procrustes<T: Real>(
    x: &FeatureMatrix<T>,
    target: &Mat<T>,
) -> Result<LinearMap<T>> {
    orthogonal_procrustes_raw(x.matrix(), target)
}

pub fn orthogonal_procrustes_raw<T: Real>(x: &Mat<T>, target: &Mat<T>) -> Result<LinearMap<T>> {
    if x.shape() != target.shape() {
        return Err(LfaError::ShapeMismatch(format!(
            "features {}x{} vs target {}x{}",
            x.rows(),
            x.cols(),
            target.rows(),
            target.cols()
        )));
    }
    let cross = x.t_matmul(target)?;
    if !(cross.frobenius_norm() >= T::of(DEGENERATE_CROSS_NORM)) {
        return Err(LfaError::DegenerateCross);
    }
    let f = svd(&cross)?;
    let w = f.u.matmul(&f.v.transpose())?;
    LinearMap::new(w, MapKind::Orthogonal)
}

/// `W_β = W_op − β(W_op − I)`, evaluated literally.
///
/// This is one gradient step of `β/2·‖W − I‖_F²` with unit step size; see
/// [`beta_regularizer_grad`].
pub fn beta_procrustes<T: Real>(w_op: &LinearMap<T>, beta: BetaParam) -> LinearMap<T> {
    let b = T::of(beta.value());
    let d = w_op.dim();
    let w = &w_op.data;
    let data = Mat::from_fn(d, d, |r, c| {
        let id = if r == c { T::one() } else { T::zero() };
        w[(r, c)] - b * (w[(r, c)] - id)
    });
    LinearMap {
        data,
        kind: MapKind::Beta,
    }
}

/// Gradient of `β/2·‖W − I‖_F²`: `β(W − I)`.
pub fn beta_regularizer_grad<T: Real>(w: &Mat<T>, beta: BetaParam) -> Mat<T> {
    let b = T::of(beta.value());
    Mat::from_fn(w.rows(), w.cols(), |r, c| {
        let id = if r == c { T::one() } else { T::zero() };
        b * (w[(r, c)] - id)
    })
}

/// `‖X·W − target‖_F²`.
pub fn procrustes_objective<T: Real>(x: &Mat<T>, w: &Mat<T>, target: &Mat<T>) -> Result<T> {
    let r = x.matmul(w)?.sub(target)?;
    Ok(r.as_slice().iter().map(|&v| v * v).sum())
}
