//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A trial layout that cannot be constructed (e.g. clusters not divisible
    /// into equal groups).
    #[error("invalid design: {0}")]
    InvalidDesign(String),

    /// A scenario configuration that fails validation (negative variance,
    /// short trend vector, ...).
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    /// The fixed-effects design matrix does not have full column rank.
    #[error("design matrix is rank deficient; collinear columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    /// A linear system that should be positive definite was not.
    #[error("singular system: {0}")]
    Singular(String),

    /// An argument outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Malformed observation CSV. `line` is 1-based and counts the header.
    #[error("csv parse error at line {line}: {message}")]
    CsvParse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
