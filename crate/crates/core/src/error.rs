use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("dimension {0} exceeds the 2^24 limit")]
    DimensionOverflow(u64),

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image shapes differ: {0}")]
    ShapeMismatch(String),

    #[error("color matrix is singular (|det| = {0:e})")]
    SingularMatrix(f64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("the ie pipeline requires inverse tone parameters")]
    MissingInvTone,

    #[error("{0} parameter combinations fail the monotonicity check")]
    NonMonotoneRegion(usize),

    #[error("lookup table was built for {built:?}, requested {requested:?}")]
    StageMismatch {
        built: crate::inverse::LutStage,
        requested: crate::inverse::LutStage,
    },

    #[error("missing inverse lookup table for {0:?}")]
    MissingLut(crate::inverse::LutStage),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("range violation: {0}")]
    RangeViolation(String),

    #[error("parameter vector has {found} values, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("external predictor failed: {0}")]
    ExternalPredictorFailure(String),

    #[error("non-finite or negative loss at {0}")]
    NonFiniteLoss(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
