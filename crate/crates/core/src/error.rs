use thiserror::Error;

/// Errors raised by the belief algebra, estimators, trainer and file formats.
#[derive(Debug, Error)]
pub enum BsiError {
    /// A numeric argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// A caller-side contract was violated (index out of range, wrong parameter count, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Malformed checkpoint or sample file. `offset` is the byte position where parsing failed.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("training diverged at step {step}: {message}")]
    NonFinite { step: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BsiError>;

pub(crate) fn domain(msg: impl Into<String>) -> BsiError {
    BsiError::Domain(msg.into())
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(BsiError::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Positive, finite precision check shared by every closed-form operation.
pub(crate) fn check_precision(name: &str, value: f64) -> Result<()> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(domain(format!(
            "{name} must be positive and finite, got {value}"
        )));
    }
    Ok(())
}
