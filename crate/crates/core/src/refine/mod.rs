//! Iterative refinement of an initial map with a mined hinge loss (or one of
//! the baseline losses), AdamW, cosine annealing, input noise/dropout and an
//! optional EMA companion map.

mod ema;
mod loss;
mod optim;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use ema::{alpha_schedule, average_maps, EmaState, ALPHA_START};
pub use loss::{
    adaptive_margin, arerank_grad, arerank_loss, baseline_loss, csls_neighborhoods, loss_and_grad,
    nearest_prototypes, LossKind, LossParams, DIRECTION_EPS,
};
pub use optim::{cosine_lr, OptimizerState};

use crate::error::{LfaError, Result};
use crate::linalg::Mat;
use crate::rng::Rng;
use crate::scalar::Real;
use crate::types::{LabeledFeatures, LinearMap, MapKind, PrototypeMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub loss: LossKind,
    pub k: usize,
    pub s: f64,
    pub steps: usize,
    pub lr: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub noise_std: f64,
    pub dropout_p: f64,
    pub ema: bool,
    pub seed: u64,
    /// Mini-batch size; `None` trains on the full set every step.
    pub batch: Option<usize>,
    /// Temperature of the cross-entropy baselines.
    pub tau: f64,
    /// Margin of the triplet baseline.
    pub triplet_margin: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Arerank,
            k: 3,
            s: 4.0,
            steps: 200,
            lr: 5e-4,
            lr_min: 1e-7,
            weight_decay: 5e-4,
            noise_std: 3.5e-2,
            dropout_p: 2.5e-2,
            ema: false,
            seed: 0,
            batch: None,
            tau: 0.05,
            triplet_margin: 0.25,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LfaError::InvalidConfig(m.to_string()));
        if self.k < 1 {
            return bad("k must be at least 1");
        }
        if !(self.s > 0.0) {
            return bad("s must be positive");
        }
        if !(self.lr > 0.0) || !(self.lr_min > 0.0) || self.lr_min > self.lr {
            return bad("need 0 < lr_min <= lr");
        }
        if !(self.weight_decay >= 0.0) || !(self.noise_std >= 0.0) {
            return bad("weight_decay and noise_std must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout_p must lie in [0, 1)");
        }
        if self.batch == Some(0) {
            return bad("batch must be positive");
        }
        if !(self.tau > 0.0) {
            return bad("tau must be positive");
        }
        Ok(())
    }

    pub fn loss_params(&self) -> LossParams {
        LossParams {
            k: self.k,
            s: self.s,
            tau: self.tau,
            triplet_margin: self.triplet_margin,
        }
    }
}

/// Additive Gaussian noise followed by inverted dropout:
/// `x' = dropout(x + ε)/(1 − p)`. Rows are not renormalized.
///
/// With `noise_std = 0` and `dropout_p = 0` the input is returned untouched.
pub fn perturb<T: Real>(x: &Mat<T>, noise_std: f64, dropout_p: f64, rng: &mut Rng) -> Mat<T> {
    let mut out = x.clone();
    if noise_std > 0.0 {
        for v in out.as_mut_slice() {
            *v += rng.normal::<T>(noise_std);
        }
    }
    if dropout_p > 0.0 {
        let keep_scale = T::one() / (T::one() - T::of(dropout_p));
        for v in out.as_mut_slice() {
            if rng.uniform() < dropout_p {
                *v = T::zero();
            } else {
                *v *= keep_scale;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RefineOutput<T> {
    pub w: LinearMap<T>,
    pub w_tt: Option<LinearMap<T>>,
    pub trace: Vec<TraceRow>,
}

/// Writes the loss trace as `step,lr,loss,alpha` CSV; `alpha` is empty when the
/// EMA map is disabled.
pub fn write_trace_csv(trace: &[TraceRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "step,lr,loss,alpha")?;
    for r in trace {
        match r.alpha {
            Some(a) => writeln!(out, "{},{:e},{:e},{}", r.step, r.lr, r.loss, a)?,
            None => writeln!(out, "{},{:e},{:e},", r.step, r.lr, r.loss)?,
        }
    }
    Ok(())
}

/// Mini-batch cursor over a reshuffled index order.
struct Batcher {
    order: Vec<usize>,
    cursor: usize,
    size: usize,
}

impl Batcher {
    fn next(&mut self, rng: &mut Rng) -> Vec<usize> {
        if self.cursor + self.size > self.order.len() {
            rng.shuffle(&mut self.order);
            self.cursor = 0;
        }
        let b = self.order[self.cursor..self.cursor + self.size].to_vec();
        self.cursor += self.size;
        b
    }
}

/// Runs `cfg.steps` iterations of perturb → loss/gradient → cosine-scheduled
/// AdamW step → optional EMA update, starting from `w0`.
pub fn refine<T: Real>(
    w0: &LinearMap<T>,
    data: &LabeledFeatures<T>,
    y: &PrototypeMatrix<T>,
    cfg: &RefineConfig,
) -> Result<RefineOutput<T>> {
    cfg.validate()?;
    let d = w0.dim();
    if data.features.dim() != d || y.dim() != d {
        return Err(LfaError::DimensionMismatch(format!(
            "map d = {d}, features d = {}, prototypes d = {}",
            data.features.dim(),
            y.dim()
        )));
    }
    let mut ema = cfg.ema.then(|| EmaState::<T>::new(d, cfg.steps));
    if cfg.steps == 0 {
        return Ok(RefineOutput {
            w: w0.clone(),
            w_tt: ema.map(|e| e.w_tt),
            trace: Vec::new(),
        });
    }

    let mut rng = Rng::new(cfg.seed);
    let x = data.features.matrix();
    let n = x.rows();
    let params = cfg.loss_params();
    let mut batcher = cfg.batch.filter(|&b| b < n).map(|size| Batcher {
        order: (0..n).collect(),
        cursor: n, // forces a shuffle on first use
        size,
    });
    let mut w = w0.data.clone();
    let mut opt = OptimizerState::<T>::new(d, d);
    let mut trace = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let (xb, labels) = match batcher.as_mut() {
            Some(b) => {
                let idx = b.next(&mut rng);
                let labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
                (x.select_rows(&idx), labels)
            }
            None => (x.clone(), data.labels.clone()),
        };
        let xb = perturb(&xb, cfg.noise_std, cfg.dropout_p, &mut rng);
        let (loss, grad) = loss_and_grad(cfg.loss, &xb, &labels, &w, y, &params)?;
        let lr = cosine_lr(step, cfg.steps, cfg.lr, cfg.lr_min);
        opt.step(&mut w, &grad, lr, cfg.weight_decay)
            .map_err(|e| match e {
                LfaError::NonFiniteGradient { .. } => LfaError::NonFiniteGradient { step },
                other => other,
            })?;
        let alpha = match ema.as_mut() {
            Some(e) => Some(e.update(&w)?),
            None => None,
        };
        trace.push(TraceRow {
            step,
            lr,
            loss: loss.f64(),
            alpha,
        });
    }

    Ok(RefineOutput {
        w: LinearMap {
            data: w,
            kind: MapKind::Refined,
        },
        w_tt: ema.map(|e| e.w_tt),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perturb_identity_when_disabled() {
        let x = Mat::from_rows(&[[0.6, -0.0, 0.8]]);
        let out = perturb(&x, 0.0, 0.0, &mut Rng::new(1));
        let bits = |m: &Mat<f64>| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&out), bits(&x));
    }

    #[test]
    fn perturb_deterministic() {
        let x = Mat::from_rows(&[[0.6, 0.8], [1.0, 0.0]]);
        let a = perturb(&x, 0.1, 0.3, &mut Rng::new(9));
        let b = perturb(&x, 0.1, 0.3, &mut Rng::new(9));
        assert_eq!(a, b);
        let c = perturb(&x, 0.1, 0.3, &mut Rng::new(10));
        assert_ne!(a, c);
    }

    #[test]
    fn config_validation() {
        assert!(RefineConfig::default().validate().is_ok());
        let bad = RefineConfig { k: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = RefineConfig { lr_min: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = RefineConfig { dropout_p: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn trace_csv_layout() {
        let rows = vec![
            TraceRow { step: 0, lr: 0.5, loss: 1.0, alpha: Some(0.9) },
            TraceRow { step: 1, lr: 0.25, loss: 0.5, alpha: None },
        ];
        let mut buf = Vec::new();
        write_trace_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "step,lr,loss,alpha\n0,5e-1,1e0,0.9\n1,2.5e-1,5e-1,\n");
    }
}
