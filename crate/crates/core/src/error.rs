use std::io;

use thiserror::Error;

/// Errors produced anywhere in the downscaling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("bearing undefined between coincident or antipodal points ({src_lat}, {src_lon}) -> ({dst_lat}, {dst_lon})")]
    DegenerateBearing {
        src_lat: f64,
        src_lon: f64,
        dst_lat: f64,
        dst_lon: f64,
    },
    #[error("target ({lat}, {lon}) lies on a land cell")]
    TargetOnLand { lat: f64, lon: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("time index {t} outside valid window range [{lo}, {hi}]")]
    WindowOutOfRange { t: i64, lo: i64, hi: i64 },
    #[error("degenerate series: {0}")]
    DegenerateSeries(String),
    #[error("shape mismatch at layer {layer}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        layer: usize,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("backward called without a cached forward pass")]
    NoCache,
    #[error("empty batch")]
    EmptyBatch,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("stage-1 model required but missing")]
    MissingStage1,
    #[error("invalid config key `{key}`: {reason}")]
    ConfigInvalid { key: String, reason: String },
    #[error("malformed {format} data: {reason}")]
    Format {
        format: &'static str,
        reason: String,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            format,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
