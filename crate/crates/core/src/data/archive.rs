//! Feature archives: an NPY array (`<base>.npy`) plus a JSON manifest
//! (`<base>.json`) carrying labels, class names, optional group ids and
//! provenance.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::npy::{decode_npy, write_npy, Dtype};
use crate::error::{LfaError, Result};
use crate::linalg::Mat;
use crate::scalar::Real;
use crate::types::{check_labels, FeatureMatrix, LabeledFeatures, LinearMap, MapKind, PrototypeMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
    pub class_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_ids: Option<Vec<u64>>,
    pub split: Split,
    pub source_model: String,
}

impl Manifest {
    /// Checks manifest lengths against an `rows`-row array.
    pub fn validate(&self, rows: usize) -> Result<()> {
        if let Some(labels) = &self.labels {
            if labels.len() != rows {
                return Err(LfaError::ShapeMismatch(format!(
                    "manifest has {} labels for {rows} rows",
                    labels.len()
                )));
            }
            check_labels(labels, self.class_names.len())?;
        }
        if let Some(groups) = &self.group_ids {
            if groups.len() != rows {
                return Err(LfaError::ShapeMismatch(format!(
                    "manifest has {} group ids for {rows} rows",
                    groups.len()
                )));
            }
        }
        Ok(())
    }
}

/// Resolves `<base>.npy` / `<base>.json`, accepting a base with either extension.
pub fn archive_paths(base: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let base = base.as_ref();
    let stem = match base.extension().and_then(|e| e.to_str()) {
        Some("npy") | Some("json") => base.with_extension(""),
        _ => base.to_path_buf(),
    };
    let mut npy = stem.clone().into_os_string();
    npy.push(".npy");
    let mut json = stem.into_os_string();
    json.push(".json");
    (npy.into(), json.into())
}

/// Writes `<base>.npy` (little-endian `f32`) and `<base>.json`. Identical
/// inputs produce identical bytes.
pub fn write_archive<T: Real>(features: &Mat<T>, manifest: &Manifest, base: impl AsRef<Path>) -> Result<()> {
    manifest.validate(features.rows())?;
    let (npy_path, json_path) = archive_paths(base);
    let mut buf = Vec::new();
    write_npy(features, Dtype::F4, &mut buf).map_err(|e| LfaError::io(&npy_path, e))?;
    fs::write(&npy_path, buf).map_err(|e| LfaError::io(&npy_path, e))?;
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&json_path, text).map_err(|e| LfaError::io(&json_path, e))?;
    Ok(())
}

/// A loaded archive: row-normalized features and the manifest.
#[derive(Debug, Clone)]
pub struct Archive<T> {
    pub features: FeatureMatrix<T>,
    pub manifest: Manifest,
}

impl<T: Real> Archive<T> {
    pub fn labeled(&self) -> Result<LabeledFeatures<T>> {
        let labels = self.manifest.labels.clone().ok_or(LfaError::LabelsRequired)?;
        LabeledFeatures::new(self.features.clone(), labels, self.manifest.class_names.len())
    }

    /// Interprets the archive rows as class prototypes named by `class_names`.
    pub fn prototypes(&self) -> Result<PrototypeMatrix<T>> {
        PrototypeMatrix::new(self.features.matrix(), self.manifest.class_names.clone())
    }

    pub fn num_classes(&self) -> usize {
        self.manifest.class_names.len()
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| LfaError::io(path, e))
}

/// Reads and validates an archive; features are widened to `T` and normalized.
pub fn read_archive<T: Real>(base: impl AsRef<Path>) -> Result<Archive<T>> {
    let (npy_path, json_path) = archive_paths(base);
    let bytes = read_bytes(&npy_path)?;
    let (raw, _) = decode_npy::<T>(&bytes)?;
    let text = read_bytes(&json_path)?;
    let manifest: Manifest = serde_json::from_slice(&text).map_err(|e| LfaError::ManifestParse {
        path: json_path.clone(),
        message: e.to_string(),
    })?;
    manifest.validate(raw.rows())?;
    let mut features = FeatureMatrix::new(&raw)?;
    if let Some(groups) = &manifest.group_ids {
        features = features.with_groups(groups.clone())?;
    }
    Ok(Archive { features, manifest })
}

/// Writes a `d x d` map as a little-endian `f64` NPY file (full precision).
pub fn write_map<T: Real>(w: &LinearMap<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_npy(&w.data, Dtype::F8, &mut buf).map_err(|e| LfaError::io(path, e))?;
    fs::write(path, buf).map_err(|e| LfaError::io(path, e))
}

pub fn read_map<T: Real>(path: impl AsRef<Path>, kind: MapKind) -> Result<LinearMap<T>> {
    let path = path.as_ref();
    let (m, _) = decode_npy::<T>(&read_bytes(path)?)?;
    LinearMap::new(m, kind)
}
