use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Engine error. Every variant carries a stable code (see [`Error::code`])
/// so foreign callers can match on it without parsing messages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid object state: {0}")]
    InvalidState(String),
    #[error("invalid object model: {0}")]
    InvalidModel(String),
    #[error("invalid taxel geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed input at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("batch item {index}: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable, versioned error code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidState(_) => "TXS-E001-INVALID-STATE",
            Error::InvalidModel(_) => "TXS-E002-INVALID-MODEL",
            Error::InvalidGeometry(_) => "TXS-E003-INVALID-GEOMETRY",
            Error::InvalidConfig(_) => "TXS-E004-INVALID-CONFIG",
            Error::Parse { .. } => "TXS-E005-PARSE",
            Error::Batch { .. } => "TXS-E006-BATCH",
            Error::Io(_) => "TXS-E007-IO",
            Error::Json(_) => "TXS-E008-JSON",
            Error::Csv(_) => "TXS-E009-CSV",
        }
    }

    /// Index of the offending batch item, if this error came from a batch call.
    pub fn batch_index(&self) -> Option<usize> {
        match self {
            Error::Batch { index, .. } => Some(*index),
            _ => None,
        }
    }

    pub(crate) fn in_batch(self, index: usize) -> Self {
        Error::Batch {
            index,
            source: Box::new(self),
        }
    }
}
