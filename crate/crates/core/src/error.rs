use thiserror::Error;

/// Errors produced by the estimation toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("size error: {0}")]
    Size(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in column {column} at row {row}")]
    NonFinite { column: usize, row: usize },

    #[error("grid point {omega} lies outside the basis domain [{lo}, {hi}]")]
    Domain { omega: f64, lo: f64, hi: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite intermediate while evaluating series {series} at frequency index {freq}")]
    Evaluation { series: usize, freq: usize },

    #[error("numerical failure: {message}")]
    Numerical { message: String },

    #[error("rank deficient input: numerical rank {rank}, expected {expected}")]
    Rank { rank: usize, expected: usize },

    #[error("optimizer stalled at outer iteration {iteration}: every block update was rejected")]
    Stall { iteration: usize },

    #[error("model is not stationary: {0}")]
    NotStationary(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn numerical(message: impl Into<String>) -> Self {
        Error::Numerical {
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
