use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by kernel evaluation, selection, regression and data loading.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    #[error(
        "threshold {epsilon:e} is below the achievable numerical rank: \
         largest remaining error {delta:e} is under the floor {floor:e}"
    )]
    BelowNumericalRank { epsilon: f64, delta: f64, floor: f64 },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("kernel mismatch: {0}")]
    KernelMismatch(String),

    #[error("{path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { path: PathBuf, expected: u32, found: u32 },

    #[error("{path}: truncated file, expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("item count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("invalid class label {label} at item {index} (expected < {num_classes})")]
    InvalidLabel {
        label: usize,
        index: usize,
        num_classes: usize,
    },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    ParseValue { row: usize, column: String, value: String },

    #[error("unsupported format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_) | Error::KernelMismatch(_) => ErrorKind::Config,
            Error::DegenerateKernel(_) | Error::BelowNumericalRank { .. } | Error::SingularSystem(_) => {
                ErrorKind::Numerical
            }
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
