use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{LfaError, Result};
use crate::linalg::Mat;
use crate::rng::Rng;
use crate::scalar::Real;
use crate::types::{l2_normalize_rows, FeatureMatrix, LabeledFeatures};

/// A sampling unit: one source item (all its crops/frames) or a single row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unit {
    pub class: usize,
    pub rows: Vec<usize>,
}

/// Groups rows into units by `group_ids` (first-appearance order), or one unit
/// per row when no groups are attached.
pub fn units<T: Real>(data: &LabeledFeatures<T>) -> Vec<Unit> {
    match data.features.group_ids() {
        None => data
            .labels
            .iter()
            .enumerate()
            .map(|(i, &class)| Unit { class, rows: vec![i] })
            .collect(),
        Some(groups) => {
            let mut slot: HashMap<u64, usize> = HashMap::new();
            let mut out: Vec<Unit> = Vec::new();
            for (i, &g) in groups.iter().enumerate() {
                let k = *slot.entry(g).or_insert_with(|| {
                    out.push(Unit {
                        class: data.labels[i],
                        rows: Vec::new(),
                    });
                    out.len() - 1
                });
                out[k].rows.push(i);
            }
            out
        }
    }
}

/// Units of each class `0..classes`, in original order.
pub fn units_by_class(units: &[Unit], classes: usize) -> Vec<Vec<usize>> {
    let mut by = vec![Vec::new(); classes];
    for (u, unit) in units.iter().enumerate() {
        if unit.class < classes {
            by[unit.class].push(u);
        }
    }
    by
}

pub fn num_classes(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

/// Draws exactly `shots` items per class without replacement. Output rows are
/// ordered by class, then draw order. Grouped rows travel with their item.
pub fn few_shot_sample<T: Real>(data: &LabeledFeatures<T>, shots: usize, rng: &mut Rng) -> Result<LabeledFeatures<T>> {
    let units = units(data);
    let by_class = units_by_class(&units, num_classes(&data.labels));
    let mut rows = Vec::new();
    for (class, members) in by_class.iter().enumerate() {
        if members.len() < shots {
            return Err(LfaError::InsufficientSamples(class));
        }
        for pick in rng.sample_indices(members.len(), shots) {
            rows.extend_from_slice(&units[members[pick]].rows);
        }
    }
    Ok(data.select(&rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateMode {
    /// Elementwise max over the group (video frames).
    Max,
    /// Elementwise mean over the group.
    Mean,
    /// Keep every row as its own sample (crops).
    Expand,
}

impl std::str::FromStr for AggregateMode {
    type Err = LfaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(AggregateMode::Max),
            "mean" => Ok(AggregateMode::Mean),
            "expand" => Ok(AggregateMode::Expand),
            other => Err(LfaError::InvalidConfig(format!("unknown aggregate mode `{other}`"))),
        }
    }
}

/// Reduces each group to one renormalized row. Output rows follow the first
/// appearance of each group id; returns the representative (first) row of each group.
pub fn group_aggregate_with_index<T: Real>(x: &FeatureMatrix<T>, mode: AggregateMode) -> Result<(FeatureMatrix<T>, Vec<usize>)> {
    if mode == AggregateMode::Expand {
        return Ok((x.clone(), (0..x.len()).collect()));
    }
    let groups = x.group_ids().ok_or(LfaError::MissingGroups)?;
    let mut slot: HashMap<u64, usize> = HashMap::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut ids = Vec::new();
    for (i, &g) in groups.iter().enumerate() {
        let k = *slot.entry(g).or_insert_with(|| {
            members.push(Vec::new());
            ids.push(g);
            members.len() - 1
        });
        members[k].push(i);
    }
    let m = x.matrix();
    let d = x.dim();
    let mut out = Mat::zeros(members.len(), d);
    for (k, rows) in members.iter().enumerate() {
        let dst = out.row_mut(k);
        dst.copy_from_slice(m.row(rows[0]));
        for &r in &rows[1..] {
            for (a, &b) in dst.iter_mut().zip(m.row(r)) {
                *a = match mode {
                    AggregateMode::Max => a.max(b),
                    _ => *a + b,
                };
            }
        }
        if mode == AggregateMode::Mean {
            let n = T::of_usize(rows.len());
            for a in dst.iter_mut() {
                *a /= n;
            }
        }
    }
    let reps = members.iter().map(|r| r[0]).collect();
    Ok((FeatureMatrix::new(&out)?.with_groups(ids)?, reps))
}

pub fn group_aggregate<T: Real>(x: &FeatureMatrix<T>, mode: AggregateMode) -> Result<FeatureMatrix<T>> {
    Ok(group_aggregate_with_index(x, mode)?.0)
}

/// Aggregates labeled features; each group takes the label of its first row.
pub fn aggregate_labeled<T: Real>(data: &LabeledFeatures<T>, mode: AggregateMode) -> Result<LabeledFeatures<T>> {
    let (features, reps) = group_aggregate_with_index(&data.features, mode)?;
    Ok(LabeledFeatures {
        features,
        labels: reps.iter().map(|&r| data.labels[r]).collect(),
    })
}

/// `x·G` with `G_ij ~ N(0, 1/d_out)`, rows renormalized afterwards.
pub fn random_projection<T: Real>(x: &Mat<T>, d_out: usize, rng: &mut Rng) -> Result<Mat<T>> {
    if d_out == 0 {
        return Err(LfaError::InvalidConfig("d_out must be at least 1".into()));
    }
    let g: Mat<T> = rng.gaussian_matrix(x.cols(), d_out, 1.0 / (d_out as f64).sqrt());
    l2_normalize_rows(&x.matmul(&g)?)
}
