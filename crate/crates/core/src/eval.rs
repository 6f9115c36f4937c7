//! Classification, accuracy and the hubness / modality-gap diagnostics.

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LfaError, Result};
use crate::linalg::{dot, l2_distance, norm, svd_thin, Mat};
use crate::scalar::Real;
use crate::types::{FeatureMatrix, LabeledFeatures, LinearMap, PrototypeMatrix};

/// CLIP-style logit scale of 100.
pub const DEFAULT_TAU: f64 = 0.01;

fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// `softmax(x·W·Yᵀ/τ)` per sample, with argmax predictions (ties to lower class).
pub fn classify<T: Real>(
    x: &FeatureMatrix<T>,
    w: &LinearMap<T>,
    y: &PrototypeMatrix<T>,
    tau: f64,
) -> Result<(Mat<T>, Vec<usize>)> {
    if !(tau > 0.0) {
        return Err(LfaError::InvalidConfig("tau must be positive".into()));
    }
    let logits = w.apply(x.matrix())?.matmul(&y.matrix().transpose())?;
    let preds: Vec<usize> = logits.row_iter().map(argmax).collect();
    let inv_tau = T::of(1.0 / tau);
    let mut probs = logits.clone();
    for i in 0..probs.rows() {
        let row = probs.row_mut(i);
        let mx = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = ((*v - mx) * inv_tau).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok((probs, preds))
}

pub fn predict<T: Real>(x: &FeatureMatrix<T>, w: &LinearMap<T>, y: &PrototypeMatrix<T>) -> Result<Vec<usize>> {
    let logits = w.apply(x.matrix())?.matmul(&y.matrix().transpose())?;
    Ok(logits.row_iter().map(argmax).collect())
}

pub fn top1_accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(LfaError::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// `1 +` the number of incorrect prototypes strictly closer (ℓ2) to `x_i·W`
/// than the ground-truth prototype. Equal distances do not raise the rank.
pub fn gt_rank<T: Real>(
    x: &FeatureMatrix<T>,
    w: &LinearMap<T>,
    y: &PrototypeMatrix<T>,
    labels: &[usize],
) -> Result<Vec<usize>> {
    if labels.len() != x.len() {
        return Err(LfaError::LengthMismatch {
            left: labels.len(),
            right: x.len(),
        });
    }
    crate::types::check_labels(labels, y.num_classes())?;
    let z = w.apply(x.matrix())?;
    Ok((0..z.rows())
        .into_par_iter()
        .map(|i| {
            let zi = z.row(i);
            let own = l2_distance(zi, y.row(labels[i]));
            1 + (0..y.num_classes())
                .filter(|&j| j != labels[i] && l2_distance(zi, y.row(j)) < own)
                .count()
        })
        .collect())
}

/// ℓ2 distance between the centroid of the embeddings and the centroid of
/// their matched prototypes.
pub fn modality_gap<T: Real>(x: &Mat<T>, y_per_sample: &Mat<T>) -> Result<T> {
    x.check_same_shape(y_per_sample)?;
    Ok(l2_distance(&x.column_means(), &y_per_sample.column_means()))
}

/// Projects centered points onto their top `out_dim` principal directions.
#[derive(Debug, Clone)]
pub struct Pca<T> {
    pub mean: Vec<T>,
    /// `d x out_dim`, orthonormal columns.
    pub components: Mat<T>,
    /// Variance (denominator `M − 1`) captured by each component.
    pub variances: Vec<T>,
    /// `M x out_dim` coordinates.
    pub coords: Mat<T>,
}

pub fn pca_project<T: Real>(points: &Mat<T>, out_dim: usize) -> Result<Pca<T>> {
    let (m, d) = points.shape();
    if m < 2 {
        return Err(LfaError::ShapeMismatch("PCA needs at least two points".into()));
    }
    if out_dim == 0 || out_dim > d.min(m) {
        return Err(LfaError::InvalidConfig(format!("out_dim must be in 1..={}", d.min(m))));
    }
    let mean = points.column_means();
    let centered = Mat::from_fn(m, d, |r, c| points[(r, c)] - mean[c]);
    // Right singular vectors of the centered data are the principal axes.
    let (axes, sigma) = if m >= d {
        let f = svd_thin(&centered)?;
        (f.v, f.sigma)
    } else {
        let f = svd_thin(&centered.transpose())?;
        (f.u, f.sigma)
    };
    let components = Mat::from_fn(d, out_dim, |r, c| axes[(r, c)]);
    let denom = T::of_usize(m - 1);
    let variances = sigma.iter().take(out_dim).map(|&s| s * s / denom).collect();
    let coords = centered.matmul(&components)?;
    Ok(Pca {
        mean,
        components,
        variances,
        coords,
    })
}

/// Majority vote over the `k` most cosine-similar training rows. Vote ties go
/// to whichever tied class has the nearest member.
pub fn knn_baseline<T: Real>(train: &LabeledFeatures<T>, test: &FeatureMatrix<T>, k: usize) -> Result<Vec<usize>> {
    let n = train.len();
    if k == 0 || k > n {
        return Err(LfaError::InvalidConfig(format!("k must be in 1..={n}")));
    }
    if train.features.dim() != test.dim() {
        return Err(LfaError::DimensionMismatch(format!(
            "train d = {}, test d = {}",
            train.features.dim(),
            test.dim()
        )));
    }
    let classes = train.labels.iter().max().map_or(0, |m| m + 1);
    let tm = train.features.matrix();
    Ok((0..test.len())
        .into_par_iter()
        .map(|q| {
            let qv = test.matrix().row(q);
            let sims: Vec<T> = (0..n).map(|i| dot(qv, tm.row(i))).collect();
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| sims[b].partial_cmp(&sims[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
            let mut votes = vec![0usize; classes];
            for &i in &idx[..k] {
                votes[train.labels[i]] += 1;
            }
            let top = *votes.iter().max().expect("k >= 1");
            // first neighbor (nearest) whose class is among the tied leaders
            idx[..k]
                .iter()
                .map(|&i| train.labels[i])
                .find(|&c| votes[c] == top)
                .expect("a leader exists among neighbors")
        })
        .collect())
}

/// Mean cosine between mapped embeddings and prototypes of *other* classes.
pub fn cross_interference<T: Real>(
    x: &FeatureMatrix<T>,
    w: &LinearMap<T>,
    y: &PrototypeMatrix<T>,
    labels: &[usize],
) -> Result<f64> {
    let z = w.apply(x.matrix())?;
    let c = y.num_classes();
    let mut total = 0.0;
    let mut count = 0usize;
    for (zi, &gt) in z.row_iter().zip(labels) {
        let zn = norm(zi);
        if zn == T::zero() {
            continue;
        }
        for j in (0..c).filter(|&j| j != gt) {
            total += (dot(zi, y.row(j)) / zn).f64();
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub top1: f64,
    /// `None` for classes without test samples.
    pub per_class_acc: Vec<Option<f64>>,
    pub mean_gt_rank: f64,
    /// `rank_histogram[r - 1]` counts samples whose ground-truth rank is `r`.
    pub rank_histogram: Vec<usize>,
    pub modality_gap: f64,
    pub cross_interference: f64,
    pub n: usize,
    pub classes: usize,
}

impl EvalReport {
    pub fn write_histogram_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "rank,count")?;
        for (r, c) in self.rank_histogram.iter().enumerate() {
            writeln!(out, "{},{}", r + 1, c)?;
        }
        Ok(())
    }
}

pub fn rank_histogram(ranks: &[usize], classes: usize) -> Vec<usize> {
    let mut hist = vec![0usize; classes];
    for &r in ranks {
        hist[r - 1] += 1;
    }
    hist
}

/// Scores `w` on labeled features.
pub fn evaluate<T: Real>(
    data: &LabeledFeatures<T>,
    w: &LinearMap<T>,
    y: &PrototypeMatrix<T>,
) -> Result<EvalReport> {
    let c = y.num_classes();
    let preds = predict(&data.features, w, y)?;
    let top1 = top1_accuracy(&preds, &data.labels)?;
    let mut hits = vec![0usize; c];
    let mut seen = vec![0usize; c];
    for (&p, &l) in preds.iter().zip(&data.labels) {
        seen[l] += 1;
        if p == l {
            hits[l] += 1;
        }
    }
    let per_class_acc = hits
        .iter()
        .zip(&seen)
        .map(|(&h, &s)| (s > 0).then(|| h as f64 / s as f64))
        .collect();
    let ranks = gt_rank(&data.features, w, y, &data.labels)?;
    let mean_gt_rank = ranks.iter().sum::<usize>() as f64 / ranks.len().max(1) as f64;
    let mapped = w.apply(data.features.matrix())?;
    let gap = modality_gap(&mapped, &y.gather(&data.labels))?.f64();
    Ok(EvalReport {
        top1,
        per_class_acc,
        mean_gt_rank,
        rank_histogram: rank_histogram(&ranks, c),
        modality_gap: gap,
        cross_interference: cross_interference(&data.features, w, y, &data.labels)?,
        n: data.len(),
        classes: c,
    })
}
