//! Slow-moving companion map for base-to-new transfer.
//!
//! `W_tt` starts at the identity and absorbs only the early refinement updates:
//! its momentum rises from 0.9 to 1.0 over the first half of training, after
//! which it is frozen.

use crate::error::Result;
use crate::linalg::Mat;
use crate::scalar::Real;
use crate::types::{LinearMap, MapKind};

pub const ALPHA_START: f64 = 0.9;

/// Momentum at step `t` of `total`: `0.9 + 0.1·ln(1+t)/ln(1+⌊total/2⌋)` during
/// the first half, `1.0` afterwards.
pub fn alpha_schedule(t: usize, total: usize) -> f64 {
    let half = total / 2;
    if t >= half {
        return 1.0;
    }
    let progress = ((1 + t) as f64).ln() / ((1 + half) as f64).ln();
    (ALPHA_START + (1.0 - ALPHA_START) * progress).min(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmaState<T> {
    pub w_tt: LinearMap<T>,
    pub t: usize,
    pub total_steps: usize,
}

impl<T: Real> EmaState<T> {
    pub fn new(d: usize, total_steps: usize) -> Self {
        Self {
            w_tt: LinearMap {
                data: Mat::identity(d),
                kind: MapKind::Ema,
            },
            t: 0,
            total_steps,
        }
    }

    /// `W_tt ← α(t)·W_tt + (1 − α(t))·W`, then advances `t`.
    pub fn update(&mut self, w: &Mat<T>) -> Result<f64> {
        let alpha = alpha_schedule(self.t, self.total_steps);
        self.update_with_alpha(w, alpha)?;
        Ok(alpha)
    }

    pub fn update_with_alpha(&mut self, w: &Mat<T>, alpha: f64) -> Result<()> {
        let a = T::of(alpha);
        let b = T::one() - a;
        self.w_tt.data = self.w_tt.data.zip_with(w, |tt, cur| a * tt + b * cur)?;
        self.t += 1;
        Ok(())
    }
}

/// `(W + W_tt)/2`.
pub fn average_maps<T: Real>(w: &LinearMap<T>, w_tt: &LinearMap<T>) -> Result<LinearMap<T>> {
    let half = T::of(0.5);
    let data = w.data.zip_with(&w_tt.data, |a, b| (a + b) * half)?;
    Ok(LinearMap {
        data,
        kind: MapKind::Average,
    })
}
