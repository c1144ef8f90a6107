use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the measurement and classification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("spec field `{field}`: {reason}")]
    SpecField { field: String, reason: String },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: coordinate out of range")]
    CoordinateOutOfRange { line: usize },

    #[error("degenerate axis: globe and nerve centers are {distance:.3} px apart")]
    DegenerateAxis { distance: f64 },

    #[error("mask must be 16x128 (rows x cols), got {rows}x{cols}")]
    MaskDimensions { rows: usize, cols: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in input")]
    NonFinite,

    #[error("training corpus is empty")]
    EmptyCorpus,

    #[error("training labels contain a single class")]
    SingleClass,

    #[error("fewer patients than folds ({patients} patients, k = {k})")]
    FewerPatientsThanFolds { patients: usize, k: usize },

    #[error("{path}: bad artifact file: {reason}")]
    Artifact { path: PathBuf, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
