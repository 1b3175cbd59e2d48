use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the audit pipeline.
#[derive(Debug, Error)]
pub enum AuditError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("size mismatch in {array}: expected {expected} bytes, found {found}")]
    SizeMismatch {
        array: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("confidence {value} out of [0,1] at (model={model}, sample={sample}, aug={aug})")]
    ConfidenceOutOfRange {
        model: usize,
        sample: usize,
        aug: usize,
        value: f32,
    },

    #[error("membership byte {value} is not 0/1 at (model={model}, sample={sample})")]
    MembershipValue { model: usize, sample: usize, value: u8 },

    #[error("balanced bundle violated: sample {sample} is a member in {count} models, expected {expected}")]
    Unbalanced {
        sample: usize,
        count: usize,
        expected: usize,
    },

    #[error("invalid model stats: {0}")]
    ModelStats(String),

    #[error("non-finite input: {0}")]
    NonFinite(f64),

    #[error("model index {index} out of range (n_models = {n_models})")]
    ModelIndex { index: usize, n_models: usize },

    #[error("sample index {index} out of range (n_samples = {n_samples})")]
    SampleIndex { index: usize, n_samples: usize },

    #[error("{variant} needs at least {required} models, bundle has {found}")]
    TooFewModels {
        variant: &'static str,
        required: usize,
        found: usize,
    },

    #[error("augmentation count mismatch: {left} vs {right}")]
    AugmentationMismatch { left: usize, right: usize },

    #[error("no {0} available")]
    EmptyClass(&'static str),

    #[error("fewer than 2 usable shadows for calibration (found {0})")]
    TooFewShadows(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("run sets disagree on the sample universe: {0}")]
    UniverseMismatch(String),

    #[error("oracle scale exceeded: {0}")]
    OracleScale(String),
}

pub type Result<T> = std::result::Result<T, AuditError>;
