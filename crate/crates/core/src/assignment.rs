//! Unsupervised alignment: entropic optimal transport between mapped
//! embeddings and prototypes, alternated with Procrustes and refinement.

use serde::{Deserialize, Serialize};

use crate::error::{LfaError, Result};
use crate::linalg::{dot, norm, Mat};
use crate::procrustes::{beta_procrustes, orthogonal_procrustes, BetaParam};
use crate::refine::{refine, RefineConfig};
use crate::scalar::Real;
use crate::types::{AssignmentMatrix, AssignmentMode, FeatureMatrix, LabeledFeatures, LinearMap, PrototypeMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnMarginal {
    /// Every class receives `N/C` mass.
    Uniform,
    /// Relative class weights, rescaled to total mass `N`.
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    pub epsilon: f64,
    /// Maximum number of sweeps.
    pub iters: usize,
    /// Stop early once the column residual drops to this value.
    #[serde(default)]
    pub tol: Option<f64>,
    pub col_marginal: ColumnMarginal,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            iters: 100,
            tol: None,
            col_marginal: ColumnMarginal::Uniform,
        }
    }
}

impl SinkhornConfig {
    fn validate(&self, classes: usize) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(LfaError::InvalidConfig("epsilon must be positive".into()));
        }
        if self.iters == 0 {
            return Err(LfaError::InvalidConfig("sinkhorn needs at least one sweep".into()));
        }
        if self.tol.is_some_and(|t| !(t >= 0.0)) {
            return Err(LfaError::InvalidConfig("sinkhorn tolerance must be nonnegative".into()));
        }
        if let ColumnMarginal::Custom(w) = &self.col_marginal {
            if w.len() != classes || w.iter().any(|&v| !(v > 0.0)) {
                return Err(LfaError::InvalidConfig(
                    "custom column marginal needs one positive weight per class".into(),
                ));
            }
        }
        Ok(())
    }
}

/// `1 − cos(x_i·W, y_j)` for every sample/class pair.
pub fn cosine_cost<T: Real>(x: &Mat<T>, w: &LinearMap<T>, y: &PrototypeMatrix<T>) -> Result<Mat<T>> {
    let z = w.apply(x)?;
    let c = y.num_classes();
    let mut cost = Mat::zeros(z.rows(), c);
    for i in 0..z.rows() {
        let zi = z.row(i);
        let zn = norm(zi);
        for j in 0..c {
            let cos = if zn > T::zero() { dot(zi, y.row(j)) / zn } else { T::zero() };
            cost[(i, j)] = T::one() - cos;
        }
    }
    Ok(cost)
}

/// Result of a log-domain Sinkhorn run.
#[derive(Debug, Clone)]
pub struct SinkhornRun<T> {
    pub plan: AssignmentMatrix<T>,
    /// Max column-marginal violation after each sweep.
    pub residuals: Vec<T>,
    /// Whether the tolerance was reached (always false without one).
    pub converged: bool,
}

fn log_sum_exp<T: Real>(vals: impl Iterator<Item = T> + Clone) -> T {
    let mx = vals.clone().fold(T::neg_infinity(), |m, v| m.max(v));
    if mx == T::neg_infinity() {
        return mx;
    }
    mx + vals.map(|v| (v - mx).exp()).sum::<T>().ln()
}

/// Entropic transport plan for a precomputed cost.
///
/// Row marginals are 1 (each sample distributes unit mass); column marginals
/// follow `cfg.col_marginal`. Each sweep rescales columns then rows in the log
/// domain, so the returned plan satisfies the row constraint to rounding.
pub fn sinkhorn_plan<T: Real>(cost: &Mat<T>, cfg: &SinkhornConfig) -> Result<SinkhornRun<T>> {
    let (n, c) = cost.shape();
    cfg.validate(c)?;
    let col_mass: Vec<T> = match &cfg.col_marginal {
        ColumnMarginal::Uniform => vec![T::of_usize(n) / T::of_usize(c); c],
        ColumnMarginal::Custom(w) => {
            let total: f64 = w.iter().sum();
            w.iter().map(|&v| T::of(v * n as f64 / total)).collect()
        }
    };
    let log_b: Vec<T> = col_mass.iter().map(|b| b.ln()).collect();
    let inv_eps = T::one() / T::of(cfg.epsilon);
    let log_k = cost.map(|v| -v * inv_eps);

    let mut f = vec![T::zero(); n];
    let mut g = vec![T::zero(); c];
    let mut residuals = Vec::with_capacity(cfg.iters);
    let mut converged = false;
    for _ in 0..cfg.iters {
        for j in 0..c {
            let lse = log_sum_exp((0..n).map(|i| log_k[(i, j)] + f[i]));
            g[j] = log_b[j] - lse;
        }
        for (i, fi) in f.iter_mut().enumerate() {
            let row = log_k.row(i);
            *fi = -log_sum_exp(row.iter().zip(&g).map(|(&k, &gj)| k + gj));
        }
        if f.iter().chain(&g).any(|v| !v.is_finite()) {
            return Err(LfaError::NumericalUnderflow {
                epsilon: cfg.epsilon,
            });
        }
        let mut worst = T::zero();
        for j in 0..c {
            let col: T = (0..n).map(|i| (log_k[(i, j)] + f[i] + g[j]).exp()).sum();
            worst = worst.max((col - col_mass[j]).abs());
        }
        residuals.push(worst);
        if cfg.tol.is_some_and(|t| worst <= T::of(t)) {
            converged = true;
            break;
        }
    }
    let data = Mat::from_fn(n, c, |i, j| (log_k[(i, j)] + f[i] + g[j]).exp());
    Ok(SinkhornRun {
        plan: AssignmentMatrix {
            data,
            mode: AssignmentMode::Soft,
        },
        residuals,
        converged,
    })
}

/// Soft assignment of mapped embeddings to prototypes under cost `1 − cos`.
pub fn sinkhorn<T: Real>(
    x: &FeatureMatrix<T>,
    w: &LinearMap<T>,
    y: &PrototypeMatrix<T>,
    cfg: &SinkhornConfig,
) -> Result<AssignmentMatrix<T>> {
    Ok(sinkhorn_plan(&cosine_cost(x.matrix(), w, y)?, cfg)?.plan)
}

/// Row-wise argmax (ties to the lower class) as a one-hot assignment plus labels.
pub fn harden<T: Real>(p: &AssignmentMatrix<T>) -> (AssignmentMatrix<T>, Vec<usize>) {
    let classes = p.data.cols();
    let labels: Vec<usize> = p
        .data
        .row_iter()
        .map(|r| {
            let mut best = 0;
            for (j, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    let hard = AssignmentMatrix::from_labels(&labels, classes).expect("argmax in range");
    (hard, labels)
}

#[derive(Debug, Clone)]
pub struct UlfaOutput<T> {
    pub w: LinearMap<T>,
    /// Last soft assignment computed.
    pub assignment: AssignmentMatrix<T>,
    /// Hardened labels of the initial Sinkhorn assignment (identity map).
    pub initial_labels: Vec<usize>,
    /// Hardened labels of the final assignment, recomputed with the returned map.
    pub labels: Vec<usize>,
}

/// Unsupervised alignment:
/// Sinkhorn on `X` → orthogonal Procrustes on the soft `P·Y` → β-Procrustes,
/// then `n` rounds of {Sinkhorn on `X·W` → refine on the hardened pseudo-labels}.
pub fn ulfa<T: Real>(
    x: &FeatureMatrix<T>,
    y: &PrototypeMatrix<T>,
    n: usize,
    beta: BetaParam,
    refine_cfg: &RefineConfig,
    sk_cfg: &SinkhornConfig,
) -> Result<UlfaOutput<T>> {
    if x.dim() != y.dim() {
        return Err(LfaError::DimensionMismatch(format!(
            "features d = {}, prototypes d = {}",
            x.dim(),
            y.dim()
        )));
    }
    let identity = LinearMap::identity(x.dim());
    let p0 = sinkhorn(x, &identity, y, sk_cfg)?;
    let (_, initial_labels) = harden(&p0);
    let w_op = orthogonal_procrustes(x, &p0.times(y)?)?;
    let mut w = beta_procrustes(&w_op, beta);
    for round in 0..n {
        let p = sinkhorn(x, &w, y, sk_cfg)?;
        let (_, labels) = harden(&p);
        let data = LabeledFeatures {
            features: x.clone(),
            labels,
        };
        let cfg = RefineConfig {
            seed: refine_cfg.seed.wrapping_add(round as u64),
            ..refine_cfg.clone()
        };
        w = refine(&w, &data, y, &cfg)?.w;
    }
    let assignment = sinkhorn(x, &w, y, sk_cfg)?;
    let (_, labels) = harden(&assignment);
    Ok(UlfaOutput {
        w,
        assignment,
        initial_labels,
        labels,
    })
}

/// Shannon entropy (nats) of the class histogram of hard labels.
pub fn label_entropy(labels: &[usize], classes: usize) -> f64 {
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l] += 1;
    }
    let n = labels.len().max(1) as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_cost_gives_uniform_plan() {
        let cost = Mat::from_fn(6, 3, |_, _| 0.7);
        let run = sinkhorn_plan(&cost, &SinkhornConfig::default()).unwrap();
        for &v in run.plan.data.as_slice() {
            assert!((v - 1.0f64 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn harden_rules() {
        let p = AssignmentMatrix {
            data: Mat::from_rows(&[[0.7, 0.3], [0.5, 0.5], [0.0, 1.0]]),
            mode: AssignmentMode::Soft,
        };
        let (hard, labels) = harden(&p);
        assert_eq!(labels, vec![0, 0, 1]);
        assert_eq!(hard.mode, AssignmentMode::Hard);
        let (again, _) = harden(&hard);
        assert_eq!(again.data, hard.data);
    }

    #[test]
    fn custom_marginal() {
        let cost = Mat::from_fn(4, 2, |i, j| ((i + j) % 2) as f64);
        let cfg = SinkhornConfig {
            col_marginal: ColumnMarginal::Custom(vec![3.0, 1.0]),
            iters: 500,
            epsilon: 0.5,
            tol: None,
        };
        let run = sinkhorn_plan(&cost, &cfg).unwrap();
        let cols = run.plan.col_sums();
        assert!((cols[0] - 3.0).abs() < 1e-6 && (cols[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn bad_configs() {
        let cost = Mat::from_fn(2, 2, |_, _| 0.0);
        let cfg = SinkhornConfig { epsilon: 0.0, ..Default::default() };
        assert!(sinkhorn_plan(&cost, &cfg).is_err());
        let cfg = SinkhornConfig { col_marginal: ColumnMarginal::Custom(vec![1.0]), ..Default::default() };
        assert!(sinkhorn_plan(&cost, &cfg).is_err());
    }

    #[test]
    fn entropy_of_balanced_labels() {
        assert!((label_entropy(&[0, 1, 0, 1], 2) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(label_entropy(&[1, 1], 2), 0.0);
    }
}
