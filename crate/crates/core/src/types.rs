//! Domain types shared by every stage of the pipeline.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{LfaError, Result};
use crate::linalg::{norm, Mat};
use crate::scalar::Real;

/// Rows with a norm below this are rejected by normalization.
pub const ZERO_ROW_NORM: f64 = 1e-12;

/// Scales every row to unit ℓ2 norm.
pub fn l2_normalize_rows<T: Real>(m: &Mat<T>) -> Result<Mat<T>> {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let n = norm(row);
        if !(n >= T::of(ZERO_ROW_NORM)) {
            return Err(LfaError::ZeroRow(i));
        }
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    Ok(out)
}

/// `N x d` embeddings with unit-norm rows.
///
/// `group_ids` ties several rows (crops of one image, frames of one video) to
/// the same source item.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    data: Mat<T>,
    group_ids: Option<Vec<u64>>,
}

impl<T: Real> FeatureMatrix<T> {
    /// Normalizes raw embeddings. Requires `N >= 1` and `d >= 2`.
    pub fn new(raw: &Mat<T>) -> Result<Self> {
        if raw.rows() == 0 || raw.cols() < 2 {
            return Err(LfaError::ShapeMismatch(format!(
                "features need N >= 1 and d >= 2, got {}x{}",
                raw.rows(),
                raw.cols()
            )));
        }
        Ok(Self {
            data: l2_normalize_rows(raw)?,
            group_ids: None,
        })
    }

    pub fn with_groups(mut self, group_ids: Vec<u64>) -> Result<Self> {
        if group_ids.len() != self.data.rows() {
            return Err(LfaError::LengthMismatch {
                left: group_ids.len(),
                right: self.data.rows(),
            });
        }
        self.group_ids = Some(group_ids);
        Ok(self)
    }

    pub fn matrix(&self) -> &Mat<T> {
        &self.data
    }

    pub fn group_ids(&self) -> Option<&[u64]> {
        self.group_ids.as_deref()
    }

    pub fn len(&self) -> usize {
        self.data.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            data: self.data.select_rows(idx),
            group_ids: self
                .group_ids
                .as_ref()
                .map(|g| idx.iter().map(|&i| g[i]).collect()),
        }
    }
}

/// `C x d` class prototypes with unit-norm rows and unique class names.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeMatrix<T> {
    data: Mat<T>,
    class_names: Vec<String>,
}

impl<T: Real> PrototypeMatrix<T> {
    pub fn new(raw: &Mat<T>, class_names: Vec<String>) -> Result<Self> {
        if raw.rows() < 2 || raw.cols() < 2 {
            return Err(LfaError::ShapeMismatch(format!(
                "prototypes need C >= 2 and d >= 2, got {}x{}",
                raw.rows(),
                raw.cols()
            )));
        }
        if class_names.len() != raw.rows() {
            return Err(LfaError::LengthMismatch {
                left: class_names.len(),
                right: raw.rows(),
            });
        }
        let mut seen = HashSet::new();
        for name in &class_names {
            if !seen.insert(name.as_str()) {
                return Err(LfaError::InvalidConfig(format!("duplicate class name `{name}`")));
            }
        }
        Ok(Self {
            data: l2_normalize_rows(raw)?,
            class_names,
        })
    }

    /// Prototypes named `class_0 .. class_{C-1}`.
    pub fn unnamed(raw: &Mat<T>) -> Result<Self> {
        let names = (0..raw.rows()).map(|c| format!("class_{c}")).collect();
        Self::new(raw, names)
    }

    pub fn matrix(&self) -> &Mat<T> {
        &self.data
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.data.rows()
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn row(&self, c: usize) -> &[T] {
        self.data.row(c)
    }

    /// Stacks `y[labels[i]]` for every sample: the `P·Y` target of a hard assignment.
    pub fn gather(&self, labels: &[usize]) -> Mat<T> {
        self.data.select_rows(labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Identity,
    LeastSquares,
    Orthogonal,
    Beta,
    Refined,
    Ema,
    Average,
    /// Ground-truth map of a synthetic benchmark.
    Planted,
}

/// A `d x d` linear map applied on the right: `x ↦ x·W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap<T> {
    pub data: Mat<T>,
    pub kind: MapKind,
}

impl<T: Real> LinearMap<T> {
    pub fn identity(d: usize) -> Self {
        Self {
            data: Mat::identity(d),
            kind: MapKind::Identity,
        }
    }

    pub fn new(data: Mat<T>, kind: MapKind) -> Result<Self> {
        if data.rows() != data.cols() {
            return Err(LfaError::ShapeMismatch(format!(
                "linear map must be square, got {}x{}",
                data.rows(),
                data.cols()
            )));
        }
        Ok(Self { data, kind })
    }

    pub fn dim(&self) -> usize {
        self.data.rows()
    }

    pub fn matrix(&self) -> &Mat<T> {
        &self.data
    }

    /// `‖WᵀW − I‖_F`.
    pub fn orthogonality_error(&self) -> T {
        let g = self.data.t_matmul(&self.data).expect("square");
        g.sub(&Mat::identity(self.dim())).expect("square").frobenius_norm()
    }

    /// Maps every row of `x`.
    pub fn apply(&self, x: &Mat<T>) -> Result<Mat<T>> {
        if x.cols() != self.dim() {
            return Err(LfaError::DimensionMismatch(format!(
                "features have d = {}, map has d = {}",
                x.cols(),
                self.dim()
            )));
        }
        x.matmul(&self.data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentMode {
    Hard,
    Soft,
}

/// `N x C` nonnegative sample-to-class coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix<T> {
    pub data: Mat<T>,
    pub mode: AssignmentMode,
}

impl<T: Real> AssignmentMatrix<T> {
    /// One-hot rows from class labels.
    pub fn from_labels(labels: &[usize], classes: usize) -> Result<Self> {
        let mut data = Mat::zeros(labels.len(), classes);
        for (i, &c) in labels.iter().enumerate() {
            if c >= classes {
                return Err(LfaError::LabelOutOfRange {
                    row: i,
                    label: c,
                    classes,
                });
            }
            data[(i, c)] = T::one();
        }
        Ok(Self {
            data,
            mode: AssignmentMode::Hard,
        })
    }

    /// `P·Y`.
    pub fn times(&self, y: &PrototypeMatrix<T>) -> Result<Mat<T>> {
        self.data.matmul(y.matrix())
    }

    pub fn row_sums(&self) -> Vec<T> {
        self.data.row_iter().map(|r| r.iter().copied().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<T> {
        let mut acc = vec![T::zero(); self.data.cols()];
        for r in self.data.row_iter() {
            for (a, &v) in acc.iter_mut().zip(r) {
                *a += v;
            }
        }
        acc
    }
}

/// Features paired with ground-truth class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatures<T> {
    pub features: FeatureMatrix<T>,
    pub labels: Vec<usize>,
}

impl<T: Real> LabeledFeatures<T> {
    pub fn new(features: FeatureMatrix<T>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if labels.len() != features.len() {
            return Err(LfaError::LengthMismatch {
                left: labels.len(),
                right: features.len(),
            });
        }
        check_labels(&labels, classes)?;
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

pub(crate) fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    for (row, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(LfaError::LabelOutOfRange {
                row,
                label,
                classes,
            });
        }
    }
    Ok(())
}
