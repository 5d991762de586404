use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SnnError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("training failed at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, SnnError>;

pub(crate) fn invalid(msg: impl Into<String>) -> SnnError {
    SnnError::InvalidArgument(msg.into())
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(SnnError::ShapeMismatch {
            context,
            expected,
            actual,
        })
    }
}
