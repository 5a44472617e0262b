use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library. CLI front-ends map `Config` to exit
/// code 2 and everything else to exit code 3.
#[derive(Debug, Error)]
pub enum SugarError {
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("invalid ratio {0}: must lie in (0, 1]")]
    InvalidRatio(f64),
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("k = {k} out of range for {len} edges")]
    KOutOfRange { k: usize, len: usize },
    #[error("edge weights have length {got}, graph has {expected} edges")]
    MisalignedWeights { expected: usize, got: usize },
    #[error("edge index {index} out of range for {len} edges")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("edge weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("base graph size {0} is too small (need >= 4)")]
    SizeTooSmall(usize),
    #[error("graph feature dim {got} does not match model feature dim {expected}")]
    FeatureDimMismatch { expected: usize, got: usize },
    #[error("parameter store fingerprints differ: {0} vs {1}")]
    FingerprintMismatch(String, String),
    #[error("shape mismatch for `{name}`: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("corrupt checkpoint manifest: {0}")]
    CorruptManifest(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Divergence { epoch: usize, step: usize, detail: String },
    #[error("ROC-AUC undefined: split contains a single class")]
    RocAucUndefined,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SugarError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SugarError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            SugarError::Config(_)
                | SugarError::InvalidRatio(_)
                | SugarError::SizeTooSmall(_)
                | SugarError::FeatureDimMismatch { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, SugarError>;
