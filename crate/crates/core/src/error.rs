use thiserror::Error;

/// Errors shared by every module in this crate.
///
/// The variants are grouped so callers can map them onto coarse failure
/// classes: `Io` and `Parse` are data problems, everything else is a
/// numeric-domain or argument problem detected before any output is
/// produced.
#[derive(Debug, Error)]
pub enum AvhError {
    /// A vector that must have positive Euclidean norm was all zeros.
    #[error("zero-norm vector passed as `{arg}`")]
    ZeroNorm { arg: &'static str },

    /// A class index was outside `0..num_classes`.
    #[error("class index {index} out of range for {classes} classes")]
    ClassIndex { index: usize, classes: usize },

    /// Two slices that must agree in length did not.
    #[error("dimension mismatch in `{what}`: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A denominator that must be positive vanished.
    #[error("degenerate denominator: {context}")]
    Degenerate { context: String },

    /// An input had no spread where spread is required (constant column,
    /// all-tied ranks, and so on).
    #[error("zero variance in `{arg}`")]
    ZeroVariance { arg: &'static str },

    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A text record could not be parsed. `line` is 1-based and counts
    /// physical lines of the file, including comments and the header.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl AvhError {
    pub fn invalid<S: Into<String>>(msg: S) -> Self {
        AvhError::InvalidArgument(msg.into())
    }

    pub fn degenerate<S: Into<String>>(context: S) -> Self {
        AvhError::Degenerate {
            context: context.into(),
        }
    }

    /// True for variants caused by malformed or unreadable input files.
    pub fn is_data_error(&self) -> bool {
        matches!(self, AvhError::Parse { .. } | AvhError::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, AvhError>;
