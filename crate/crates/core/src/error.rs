use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid window distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid classifier: {0}")]
    InvalidClassifier(String),
    #[error("class merge does not cover level pair ({0}, {1})")]
    IncompleteMerge(usize, usize),
    #[error("empty encoding window for level pair ({0}, {1})")]
    EmptyWindow(usize, usize),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed matrix file: {reason}")]
    MalformedMatrix { path: String, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
