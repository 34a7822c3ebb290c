use thiserror::Error;

#[derive(Debug, Error)]
pub enum CgcError {
    /// Caller supplied something outside an operation's domain.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("non-finite gradient in parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("refusing to overwrite {0} (pass --force)")]
    Exists(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CgcError>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(CgcError::Input(msg.into()))
}
