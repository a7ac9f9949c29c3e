use thiserror::Error;

/// Errors produced by the kernel CCA toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("index {index} out of range for {len} samples")]
    IndexOutOfRange { index: usize, len: usize },

    /// The new landmark adds no numerically independent direction; the
    /// factor state is left unchanged.
    #[error("landmark {index} rejected: relative pivot {relative_pivot:e} below tolerance")]
    RejectedLandmark { index: usize, relative_pivot: f64 },

    /// A rank-one downdate would have produced a non-positive pivot.
    #[error("cholesky downdate lost positive definiteness at row {row}")]
    DowndateFailed { row: usize },

    #[error("all leverage scores are zero; cannot normalize a ridge distribution")]
    DegenerateScores,

    #[error("{what} failed: {reason}")]
    Decomposition { what: &'static str, reason: String },

    #[error("model has no {0}")]
    MissingModelPart(&'static str),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn decomposition(what: &'static str, reason: impl std::fmt::Debug) -> Self {
        Error::Decomposition {
            what,
            reason: format!("{reason:?}"),
        }
    }

    /// True for failures caused by floating-point breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RejectedLandmark { .. }
                | Error::DowndateFailed { .. }
                | Error::Decomposition { .. }
                | Error::DegenerateScores
        )
    }
}
