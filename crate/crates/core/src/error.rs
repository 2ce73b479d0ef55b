// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors produced across the calibration toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("schema version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("fit did not converge: {message} (residuals {residuals:?})")]
    FitFailed { message: String, residuals: Vec<f64> },

    #[error("no zero crossing: {0}")]
    NoCrossing(String),

    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),

    #[error("missing artifacts in {dir}: {missing:?}")]
    MissingArtifacts { dir: String, missing: Vec<String> },

    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
