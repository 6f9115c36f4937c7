use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = LfaError> = std::result::Result<T, E>;

/// Every failure the toolkit can report. `name()` is stable and machine readable.
#[derive(Debug, Error)]
pub enum LfaError {
    #[error("row {0} has (near) zero norm and cannot be normalized")]
    ZeroRow(usize),
    #[error("SVD did not converge after {sweeps} Jacobi sweeps")]
    ConvergenceFailure { sweeps: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("cross-covariance is (near) zero; orthogonal solution is not unique")]
    DegenerateCross,
    #[error("non-finite gradient entry at step {step}")]
    NonFiniteGradient { step: usize },
    #[error("unsupported loss variant `{0}`")]
    UnsupportedVariant(String),
    #[error("Sinkhorn potentials became non-finite (epsilon {epsilon} too small?)")]
    NumericalUnderflow { epsilon: f64 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("bad NPY magic string")]
    BadMagic,
    #[error("cannot parse NPY header: {0}")]
    HeaderParse(String),
    #[error("label {label} at row {row} is out of range for {classes} classes")]
    LabelOutOfRange { row: usize, label: usize, classes: usize },
    #[error("archive not found: {}", .0.display())]
    ArchiveNotFound(PathBuf),
    #[error("I/O failure on {}: {source}", path.display())]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad manifest {}: {message}", path.display())]
    ManifestParse { path: PathBuf, message: String },
    #[error("class {0} has too few samples")]
    InsufficientSamples(usize),
    #[error("group ids required for this aggregation mode")]
    MissingGroups,
    #[error("could not sample {classes} prototypes with pairwise cosine below {max_cos}")]
    RejectionOverflow { classes: usize, max_cos: f64 },
    #[error("labels are required for this operation")]
    LabelsRequired,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl LfaError {
    /// Stable identifier, used by the CLI in its error reports.
    pub fn name(&self) -> &'static str {
        match self {
            LfaError::ZeroRow(_) => "ZeroRow",
            LfaError::ConvergenceFailure { .. } => "ConvergenceFailure",
            LfaError::ShapeMismatch(_) => "ShapeMismatch",
            LfaError::DimensionMismatch(_) => "DimensionMismatch",
            LfaError::DegenerateCross => "DegenerateCross",
            LfaError::NonFiniteGradient { .. } => "NonFiniteGradient",
            LfaError::UnsupportedVariant(_) => "UnsupportedVariant",
            LfaError::NumericalUnderflow { .. } => "NumericalUnderflow",
            LfaError::LengthMismatch { .. } => "LengthMismatch",
            LfaError::BadMagic => "BadMagic",
            LfaError::HeaderParse(_) => "HeaderParse",
            LfaError::LabelOutOfRange { .. } => "LabelOutOfRange",
            LfaError::ArchiveNotFound(_) => "ArchiveNotFound",
            LfaError::IoFailure { .. } => "IoFailure",
            LfaError::ManifestParse { .. } => "ManifestParse",
            LfaError::InsufficientSamples(_) => "InsufficientSamples",
            LfaError::MissingGroups => "MissingGroups",
            LfaError::RejectionOverflow { .. } => "RejectionOverflow",
            LfaError::LabelsRequired => "LabelsRequired",
            LfaError::InvalidConfig(_) => "InvalidConfig",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            LfaError::ArchiveNotFound(path)
        } else {
            LfaError::IoFailure { path, source }
        }
    }
}
