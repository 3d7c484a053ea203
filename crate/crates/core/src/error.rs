use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {what} needs at least {required}, got {available}")]
    InsufficientData {
        what: String,
        required: usize,
        available: usize,
    },

    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),

    #[error("subset {index}: {source}")]
    Subset {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("optimisation diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Strips subset context so callers can match on the underlying kind.
    pub fn root(&self) -> &Error {
        match self {
            Error::Subset { source, .. } => source.root(),
            other => other,
        }
    }
}
