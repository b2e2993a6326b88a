use std::path::PathBuf;

use thiserror::Error;

use crate::precond::PrecondKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix structure: {0}")]
    Structure(String),

    #[error("singular triangular factor: zero pivot at row {row}")]
    SingularFactor { row: usize },

    #[error("{kind} factorization breakdown at row {row} (pivot {pivot:e})")]
    FactorBreakdown {
        kind: PrecondKind,
        row: usize,
        pivot: f64,
    },

    #[error("PCG breakdown at inner iteration {iteration}: {reason}")]
    PcgBreakdown { iteration: usize, reason: String },

    #[error("outer iteration {outer}: {source}")]
    Outer {
        outer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("{path}: bad magic {found:?} at byte 0")]
    BadMagic { path: PathBuf, found: [u8; 4] },

    #[error("{path}: truncated at byte {offset}, expected {expected} bytes")]
    Truncated {
        path: PathBuf,
        offset: usize,
        expected: usize,
    },

    #[error("{path}: bad header field {field} at byte {offset}: {detail}")]
    BadHeader {
        path: PathBuf,
        field: &'static str,
        offset: usize,
        detail: String,
    },

    #[error("{path}: non-finite value at cell {cell} (byte {offset})")]
    NonFinite {
        path: PathBuf,
        cell: usize,
        offset: usize,
    },

    #[error("{path}: wrapped value {value} outside (-pi, pi] at cell {cell} (byte {offset})")]
    RangeViolation {
        path: PathBuf,
        cell: usize,
        offset: usize,
        value: f64,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether this error (or the one it wraps) is a numerical breakdown of
    /// the solver or one of its preconditioners.
    pub fn is_breakdown(&self) -> bool {
        match self {
            Error::FactorBreakdown { .. }
            | Error::PcgBreakdown { .. }
            | Error::SingularFactor { .. } => true,
            Error::Outer { source, .. } => source.is_breakdown(),
            _ => false,
        }
    }
}
