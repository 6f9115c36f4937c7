//! Linear feature alignment: fit a single `d x d` map that sends frozen image
//! embeddings onto the text-encoder class prototypes of a vision-language
//! model, then classify by cosine similarity.
//!
//! The numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, with `*32` variants for `f32`.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod data;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod presets;
pub mod procrustes;
pub mod refine;
pub mod rng;
pub mod scalar;
pub mod types;

pub use error::{LfaError, Result};
pub use linalg::Mat;
pub use procrustes::{beta_procrustes, least_squares_map, orthogonal_procrustes, BetaParam};
pub use refine::{refine, LossKind, RefineConfig, RefineOutput};
pub use rng::Rng;
pub use scalar::Real;
pub use types::{
    AssignmentMatrix, AssignmentMode, FeatureMatrix, LabeledFeatures, LinearMap, MapKind, PrototypeMatrix,
};

pub type Matrix = Mat<f64>;
pub type Features = FeatureMatrix<f64>;
pub type Prototypes = PrototypeMatrix<f64>;
pub type Map = LinearMap<f64>;
pub type Labeled = LabeledFeatures<f64>;
pub type Assignment = AssignmentMatrix<f64>;

pub type Matrix32 = Mat<f32>;
pub type Features32 = FeatureMatrix<f32>;
pub type Prototypes32 = PrototypeMatrix<f32>;
pub type Map32 = LinearMap<f32>;
pub type Labeled32 = LabeledFeatures<f32>;
pub type Assignment32 = AssignmentMatrix<f32>;
