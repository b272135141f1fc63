use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Precondition violated by the caller (empty input, out-of-range parameter).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown lexeme {lexeme:?} in action text")]
    UnknownLexeme { lexeme: String },

    #[error("token count mismatch: {train} training vs {behavior} behavior log-probabilities")]
    TokenCountMismatch { train: usize, behavior: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("puzzle generation infeasible: {0}")]
    Infeasible(String),

    #[error("board is unsolvable")]
    Unsolvable,

    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),

    #[error("manifest error at line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("{0}")]
    Underfilled(Box<crate::datasets::Underfilled>),

    #[error("external filter failed: {0}")]
    ExternalFilter(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
