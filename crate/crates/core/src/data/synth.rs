//! Planted-map synthetic benchmark.
//!
//! Prototypes are random unit vectors with bounded pairwise cosine. Each sample
//! is `normalize(y_c·Q⁻¹ + ε)`, so mapping the features with the planted `Q`
//! lands them next to their class prototype.

use serde::{Deserialize, Serialize};

use crate::error::{LfaError, Result};
use crate::linalg::{dot, pinv, svd, Mat};
use crate::rng::Rng;
use crate::scalar::Real;
use crate::types::{l2_normalize_rows, FeatureMatrix, LabeledFeatures, LinearMap, MapKind, PrototypeMatrix};

/// Prototype pairs must have cosine below this.
pub const MAX_PROTOTYPE_COSINE: f64 = 0.8;
const MAX_ATTEMPTS_PER_CLASS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum PlantedMap {
    Identity,
    /// Uniformly random orthogonal matrix.
    RandomOrthogonal,
    /// Orthogonal polar factor of `I + strength·G/√d`, a rotation close to the
    /// identity for small `strength`.
    NearIdentity { strength: f64 },
    /// `I + 0.5·G/√d`, generally not orthogonal.
    RandomInvertible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub dim: usize,
    pub shots_per_class: usize,
    /// Held-out samples per class (0 for none).
    pub test_per_class: usize,
    pub noise_std: f64,
    pub planted_map: PlantedMap,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SynthSet<T> {
    pub train: LabeledFeatures<T>,
    pub test: Option<LabeledFeatures<T>>,
    pub prototypes: PrototypeMatrix<T>,
    pub planted: LinearMap<T>,
}

fn polar<T: Real>(m: &Mat<T>) -> Result<Mat<T>> {
    let f = svd(m)?;
    f.u.matmul(&f.v.transpose())
}

pub fn random_orthogonal<T: Real>(d: usize, rng: &mut Rng) -> Result<Mat<T>> {
    polar(&rng.gaussian_matrix(d, d, 1.0))
}

/// Random unit prototypes with pairwise cosine below `max_cos`.
pub fn sample_prototypes<T: Real>(classes: usize, dim: usize, max_cos: f64, rng: &mut Rng) -> Result<Mat<T>> {
    let mut rows: Vec<Vec<T>> = Vec::with_capacity(classes);
    for _ in 0..classes {
        let mut accepted = false;
        for _ in 0..MAX_ATTEMPTS_PER_CLASS {
            let raw: Mat<T> = rng.gaussian_matrix(1, dim, 1.0);
            let cand = l2_normalize_rows(&raw)?.row(0).to_vec();
            if rows.iter().all(|r| dot(r, &cand) < T::of(max_cos)) {
                rows.push(cand);
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(LfaError::RejectionOverflow { classes, max_cos });
        }
    }
    Ok(Mat::from_rows(&rows))
}

fn sample_split<T: Real>(y: &Mat<T>, q_inv: &Mat<T>, per_class: usize, noise: f64, rng: &mut Rng) -> Result<LabeledFeatures<T>> {
    let (c, d) = y.shape();
    let base = y.matmul(q_inv)?;
    let mut raw = Mat::zeros(c * per_class, d);
    let mut labels = Vec::with_capacity(c * per_class);
    for class in 0..c {
        for s in 0..per_class {
            let row = raw.row_mut(class * per_class + s);
            for (v, &b) in row.iter_mut().zip(base.row(class)) {
                *v = b + rng.normal::<T>(noise);
            }
            labels.push(class);
        }
    }
    LabeledFeatures::new(FeatureMatrix::new(&raw)?, labels, c)
}

pub fn synth_generate<T: Real>(spec: &SynthSpec) -> Result<SynthSet<T>> {
    if spec.classes < 2 || spec.dim < 2 || spec.shots_per_class == 0 {
        return Err(LfaError::InvalidConfig("need classes >= 2, dim >= 2, shots >= 1".into()));
    }
    if !(spec.noise_std >= 0.0) {
        return Err(LfaError::InvalidConfig("noise_std must be nonnegative".into()));
    }
    let root = Rng::new(spec.seed);
    let mut proto_rng = root.fork(0);
    let y = sample_prototypes::<T>(spec.classes, spec.dim, MAX_PROTOTYPE_COSINE, &mut proto_rng)?;
    let mut map_rng = root.fork(1);
    let d = spec.dim;
    let (q, kind) = match spec.planted_map {
        PlantedMap::Identity => (Mat::identity(d), MapKind::Identity),
        PlantedMap::RandomOrthogonal => (random_orthogonal(d, &mut map_rng)?, MapKind::Orthogonal),
        PlantedMap::NearIdentity { strength } => {
            let g: Mat<T> = map_rng.gaussian_matrix(d, d, strength / (d as f64).sqrt());
            (polar(&Mat::identity(d).add(&g)?)?, MapKind::Orthogonal)
        }
        PlantedMap::RandomInvertible => {
            let g: Mat<T> = map_rng.gaussian_matrix(d, d, 0.5 / (d as f64).sqrt());
            (Mat::identity(d).add(&g)?, MapKind::Planted)
        }
    };
    let q_inv = match kind {
        MapKind::Planted => pinv(&q)?,
        _ => q.transpose(),
    };
    let train = sample_split(&y, &q_inv, spec.shots_per_class, spec.noise_std, &mut root.fork(2))?;
    let test = if spec.test_per_class > 0 {
        Some(sample_split(&y, &q_inv, spec.test_per_class, spec.noise_std, &mut root.fork(3))?)
    } else {
        None
    };
    Ok(SynthSet {
        train,
        test,
        prototypes: PrototypeMatrix::unnamed(&y)?,
        planted: LinearMap { data: q, kind },
    })
}

/// Moves prototype `class` a fraction `t` of the way toward `centroid` and
/// renormalizes, creating a hub that attracts other classes' samples.
pub fn induce_hub<T: Real>(y: &PrototypeMatrix<T>, class: usize, centroid: &[T], t: f64) -> Result<PrototypeMatrix<T>> {
    let mut m = y.matrix().clone();
    let t = T::of(t);
    for (v, &c) in m.row_mut(class).iter_mut().zip(centroid) {
        *v = (T::one() - t) * *v + t * c;
    }
    PrototypeMatrix::new(&m, y.class_names().to_vec())
}
