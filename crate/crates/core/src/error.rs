use thiserror::Error;

/// Errors raised by model construction, evaluation and inference.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GpError {
    /// Bad data handed to an operation: wrong shapes, responses outside a
    /// likelihood's support, non-finite starting targets.
    #[error("input error: {0}")]
    Input(String),

    /// Inconsistent model configuration: parameter counts, masks, blocks.
    #[error("configuration error: {0}")]
    Config(String),

    /// A covariance matrix could not be factorized even after adding the
    /// largest permitted jitter.
    #[error("numerical error: {message} (attempted jitter {jitter:e})")]
    Numerical { message: String, jitter: f64 },
}

impl GpError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        GpError::Input(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        GpError::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, GpError>;
