use std::f64::consts::PI;

use crate::error::{LfaError, Result};
use crate::linalg::Mat;
use crate::scalar::Real;

/// Adam moments with decoupled weight decay (AdamW).
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub first_moment: Mat<T>,
    pub second_moment: Mat<T>,
    pub step_count: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            first_moment: Mat::zeros(rows, cols),
            second_moment: Mat::zeros(rows, cols),
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One AdamW update of `w` in place:
    /// `w ← w − lr·(m̂/(√v̂ + eps) + weight_decay·w)` with bias-corrected moments.
    pub fn step(&mut self, w: &mut Mat<T>, grad: &Mat<T>, lr: f64, weight_decay: f64) -> Result<()> {
        w.check_same_shape(grad)?;
        w.check_same_shape(&self.first_moment)?;
        if !grad.is_finite() {
            return Err(LfaError::NonFiniteGradient {
                step: self.step_count,
            });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let bc1 = T::one() - T::of(self.beta1.powi(t));
        let bc2 = T::one() - T::of(self.beta2.powi(t));
        let (lr, wd, eps) = (T::of(lr), T::of(weight_decay), T::of(self.eps));
        let m = self.first_moment.as_mut_slice();
        let v = self.second_moment.as_mut_slice();
        for (((wi, &g), mi), vi) in w.as_mut_slice().iter_mut().zip(grad.as_slice()).zip(m).zip(v) {
            *mi = b1 * *mi + (T::one() - b1) * g;
            *vi = b2 * *vi + (T::one() - b2) * g * g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *wi -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * *wi);
        }
        Ok(())
    }
}

/// Cosine annealing from `lr0` at `t = 0` to `lr_min` at `t = total`.
pub fn cosine_lr(t: usize, total: usize, lr0: f64, lr_min: f64) -> f64 {
    if total == 0 {
        return lr0;
    }
    let frac = t.min(total) as f64 / total as f64;
    lr_min + 0.5 * (lr0 - lr_min) * (1.0 + (PI * frac).cos())
}
