//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, VddError>;

#[derive(Debug, thiserror::Error)]
pub enum VddError {
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimMismatch([usize; 3], [usize; 3]),

    #[error("spacing mismatch: {0:?} vs {1:?}")]
    SpacingMismatch([f64; 3], [f64; 3]),

    #[error("invalid spacing {0:?}: all components must be > 0 and finite")]
    InvalidSpacing([f64; 3]),

    #[error("data length {got} does not match dims {dims:?} ({want} voxels)")]
    DataLength { dims: [usize; 3], got: usize, want: usize },

    #[error("label volume contains value {0} outside [-1, 1]")]
    LabelRange(f64),

    #[error("volume contains a non-finite value at index {0}")]
    NonFinite(usize),

    #[error("timestep {t} out of range (valid {lo}..={hi})")]
    TimestepRange { t: usize, lo: usize, hi: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("malformed volume header at {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("payload of {path} holds {got} scalars, header dims require {want}")]
    PayloadSize { path: PathBuf, got: usize, want: usize },

    #[error("rater set is empty")]
    EmptyRaterSet,

    #[error("rater weights invalid: {0}")]
    InvalidWeights(String),

    #[error("mask is empty where a nonempty mask is required")]
    EmptyMask,

    #[error("uncertainty map is constant; correlation undefined")]
    ConstantMap,

    #[error("need at least {need} {what}, got {got}")]
    TooFew { what: &'static str, need: usize, got: usize },

    #[error("shape does not fit the grid with a 1-voxel margin: {0}")]
    ShapeOutOfBounds(String),

    #[error("rater offset {0} produced an empty mask")]
    DegenerateRater(f64),

    #[error("training diverged: loss is not finite")]
    NonFiniteLoss,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

impl VddError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        VddError::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        VddError::Json { path: path.into(), source }
    }
}
