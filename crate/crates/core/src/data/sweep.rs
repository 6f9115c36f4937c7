//! Cross-validated choice of β.
//!
//! Each fold partitions the training pool per class into validation, training
//! and unused items (20 / 70 / 10 % by default). Fold membership depends only
//! on the seed, never on β.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampling::{num_classes, units, units_by_class};
use crate::error::{LfaError, Result};
use crate::eval::{predict, top1_accuracy};
use crate::procrustes::{beta_procrustes, orthogonal_procrustes, BetaParam};
use crate::refine::{refine, RefineConfig};
use crate::rng::Rng;
use crate::scalar::Real;
use crate::types::{LabeledFeatures, PrototypeMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub grid: Vec<f64>,
    pub folds: usize,
    pub val_frac: f64,
    pub train_frac: f64,
    pub seed: u64,
}

/// `{0.00, 0.05, …, 1.00}`.
pub fn default_beta_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            grid: default_beta_grid(),
            folds: 3,
            val_frac: 0.2,
            train_frac: 0.7,
            seed: 0,
        }
    }
}

/// Row indices of one fold's three-way partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub unused: Vec<usize>,
}

pub fn fold_partitions<T: Real>(data: &LabeledFeatures<T>, cfg: &SweepConfig) -> Result<Vec<FoldSplit>> {
    if cfg.folds == 0 {
        return Err(LfaError::InvalidConfig("need at least one fold".into()));
    }
    if !(cfg.val_frac > 0.0 && cfg.train_frac > 0.0 && cfg.val_frac + cfg.train_frac <= 1.0 + 1e-12) {
        return Err(LfaError::InvalidConfig("split fractions must be positive and sum to at most 1".into()));
    }
    let units = units(data);
    let by_class = units_by_class(&units, num_classes(&data.labels));
    let root = Rng::new(cfg.seed);
    let mut folds = Vec::with_capacity(cfg.folds);
    for f in 0..cfg.folds {
        let mut rng = root.fork(f as u64);
        let mut split = FoldSplit {
            train: Vec::new(),
            val: Vec::new(),
            unused: Vec::new(),
        };
        for (class, members) in by_class.iter().enumerate() {
            let n = members.len();
            let n_val = ((n as f64 * cfg.val_frac).round() as usize).max(1);
            let n_train = ((n as f64 * cfg.train_frac).round() as usize).max(1);
            if n_val + n_train > n {
                return Err(LfaError::InsufficientSamples(class));
            }
            let mut order = members.clone();
            rng.shuffle(&mut order);
            for (pos, &u) in order.iter().enumerate() {
                let dst = if pos < n_val {
                    &mut split.val
                } else if pos < n_val + n_train {
                    &mut split.train
                } else {
                    &mut split.unused
                };
                dst.extend_from_slice(&units[u].rows);
            }
        }
        folds.push(split);
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub beta: f64,
    pub fold: usize,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub best_beta: f64,
    /// Mean validation accuracy per grid value, in grid order.
    pub mean_acc: Vec<(f64, f64)>,
    pub table: Vec<FoldScore>,
}

impl SweepResult {
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "beta,fold,val_acc")?;
        for r in &self.table {
            writeln!(out, "{},{},{}", r.beta, r.fold, r.val_acc)?;
        }
        Ok(())
    }
}

/// For every β on the grid and every fold: orthogonal Procrustes on the fold's
/// training rows, β-interpolation, refinement, then top-1 on the validation
/// rows. Picks the β with the best mean accuracy (ties to the smaller β).
pub fn beta_sweep<T: Real>(
    data: &LabeledFeatures<T>,
    y: &PrototypeMatrix<T>,
    refine_cfg: &RefineConfig,
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    if cfg.grid.is_empty() {
        return Err(LfaError::InvalidConfig("empty beta grid".into()));
    }
    let grid: Vec<BetaParam> = cfg.grid.iter().map(|&b| BetaParam::new(b)).collect::<Result<_>>()?;
    let folds = fold_partitions(data, cfg)?;
    let fold_data: Vec<(LabeledFeatures<T>, LabeledFeatures<T>)> = folds
        .iter()
        .map(|f| (data.select(&f.train), data.select(&f.val)))
        .collect();
    let inits = fold_data
        .iter()
        .map(|(train, _)| orthogonal_procrustes(&train.features, &y.gather(&train.labels)))
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|b| (0..folds.len()).map(move |f| (b, f)))
        .collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(b, f)| {
            let (train, val) = &fold_data[f];
            let w0 = beta_procrustes(&inits[f], grid[b]);
            let w = refine(&w0, train, y, refine_cfg)?.w;
            top1_accuracy(&predict(&val.features, &w, y)?, &val.labels)
        })
        .collect::<Result<_>>()?;

    let table: Vec<FoldScore> = jobs
        .iter()
        .zip(&scores)
        .map(|(&(b, f), &acc)| FoldScore {
            beta: grid[b].value(),
            fold: f,
            val_acc: acc,
        })
        .collect();
    let nf = folds.len() as f64;
    let mean_acc: Vec<(f64, f64)> = (0..grid.len())
        .map(|b| {
            let total: f64 = scores[b * folds.len()..(b + 1) * folds.len()].iter().sum();
            (grid[b].value(), total / nf)
        })
        .collect();
    // ascending β so the strict comparison keeps the smaller value on ties
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[a].value().total_cmp(&grid[b].value()));
    let mut best = order[0];
    for &b in &order[1..] {
        if mean_acc[b].1 > mean_acc[best].1 {
            best = b;
        }
    }
    Ok(SweepResult {
        best_beta: grid[best].value(),
        mean_acc,
        table,
    })
}
