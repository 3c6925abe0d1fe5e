use std::fmt;

/// Errors produced by the codecs, trainers and file readers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on the inputs does not hold.
    #[error("validation error: {0}")]
    Validation(String),

    /// A file could not be parsed under its declared format.
    #[error("parse error at {location}: {message}")]
    Parse { location: Location, message: String },

    /// The input is well formed but carries no usable information
    /// (constant signal, singular system, collapsed cell).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A value became non-finite while processing sample `index`.
    #[error("numeric error at sample {index}: {message}")]
    Numeric { index: usize, message: String },

    /// An encoded stream is truncated or refers to codebook entries that do not exist.
    #[error("corrupt stream: {0}")]
    CorruptStream(String),

    /// No operating point satisfies the bit-rate budget.
    #[error("budget of {budget_bps} bit/s is infeasible; the smallest achievable rate is {min_rate_bps} bit/s")]
    InfeasibleBudget { budget_bps: f64, min_rate_bps: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Position of a parse failure: a 1-based line for text formats, a byte offset for binary ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(u64),
    Offset(u64),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(l) => write!(f, "line {l}"),
            Location::Offset(o) => write!(f, "byte offset {o}"),
        }
    }
}

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

pub(crate) fn degenerate(msg: impl Into<String>) -> Error {
    Error::Degenerate(msg.into())
}
