use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty input")]
    EmptyInput,

    #[error("bad header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },

    #[error("duplicate rating for user {user}, item {item}")]
    DuplicatePair { user: u64, item: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not positive definite (is a regularization weight <= 0?)")]
    NotPositiveDefinite,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures that come from the numerics rather than from the
    /// input or the caller.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::NotPositiveDefinite)
    }

    /// True for failures caused by malformed rating data.
    pub fn is_data(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::EmptyInput | Error::Header { .. } | Error::DuplicatePair { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
