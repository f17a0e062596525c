use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not an IDX {kind} file: {reason}")]
    Idx {
        path: String,
        kind: &'static str,
        reason: String,
    },
    #[error("MNIST files not found; expected {}", expected.join(", "))]
    MissingDataset { expected: Vec<String> },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Coding(#[from] uepmm::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
