use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants are grouped so the CLI can map them onto exit codes via
/// [`Error::category`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("asymmetric noise rate {rate} >= 0.5: the flipped class would outnumber the true one")]
    UnidentifiableNoise { rate: f64 },

    #[error("partner map sends class {0} to itself")]
    PartnerFixedPoint(usize),

    #[error("dimension mismatch ({what}): expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("line {line}: expected {expected} fields, found {found}")]
    RowLength {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: label {label} is outside [0, {classes})")]
    LabelOutOfRange {
        line: usize,
        label: usize,
        classes: usize,
    },

    #[error("line {line}: cannot parse {field:?}")]
    Parse { line: usize, field: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("batch of size {0} is too small for a neighbor graph (need at least 2)")]
    BatchTooSmall(usize),

    #[error("neighbor list is empty")]
    EmptyNeighbors,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("unknown example id {0}")]
    UnknownExample(usize),

    #[error("diluted label row for example {0} has not been updated yet")]
    UninitializedRow(usize),

    #[error("diluted label row for example {0} carries no mass")]
    DegenerateRow(usize),

    #[error("checkpoint shape mismatch: {0}")]
    CheckpointShape(String),

    #[error("config: {0}")]
    Config(String),

    #[error("numerical abort at epoch {epoch}: {detail}")]
    NumericalAbort { epoch: usize, detail: String },
}

/// Coarse grouping used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) | Error::UnidentifiableNoise { .. } | Error::PartnerFixedPoint(_) => {
                ErrorCategory::Config
            }
            Error::NonFinite(_) | Error::NumericalAbort { .. } | Error::DegenerateRow(_) => ErrorCategory::Numerical,
            _ => ErrorCategory::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
