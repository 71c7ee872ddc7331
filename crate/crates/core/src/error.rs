use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the embedding and checkpoint file readers.
///
/// Every variant carries a stable numeric code (see [`FormatError::code`]) so
/// that callers outside Rust can tell corrupt inputs apart.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },
    #[error("unsupported format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("truncated input: needed {needed} bytes, only {available} available")]
    Truncated { needed: u64, available: u64 },
    #[error("{0} unexpected trailing bytes after payload")]
    TrailingBytes(u64),
    #[error("invalid header field `{field}`: {reason}")]
    InvalidHeader { field: &'static str, reason: String },
}

impl FormatError {
    pub fn code(&self) -> u32 {
        match self {
            FormatError::BadMagic { .. } => 10,
            FormatError::UnsupportedVersion { .. } => 11,
            FormatError::Truncated { .. } => 12,
            FormatError::TrailingBytes(_) => 13,
            FormatError::InvalidHeader { .. } => 14,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("point is off the hyperboloid (residual {residual:e})")]
    OffManifold { residual: f64 },
    #[error("tangent norm {norm} exceeds the supported maximum {max}")]
    TangentTooLarge { norm: f64, max: f64 },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("degenerate configuration: {0}")]
    Degenerate(&'static str),
    #[error("hyperplane normal of class {class} is not spacelike")]
    NullNormal { class: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },
    #[error(
        "exit {exit} has no {partition} predictions in the reference set; \
         use a larger reference set or enable the sigma-floor fallback"
    )]
    InsufficientReference { exit: usize, partition: &'static str },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("{path}: row {row}, column {column}: {reason}")]
    Csv {
        path: PathBuf,
        row: usize,
        column: usize,
        reason: String,
    },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures caused by input data (files, labels, schemas) as
    /// opposed to numerical failures.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Csv { .. }
                | Error::Format(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::LabelOutOfRange { .. }
                | Error::Empty(_)
                | Error::DimensionMismatch { .. }
                | Error::InsufficientReference { .. }
        )
    }
}
