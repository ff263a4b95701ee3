use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violates a documented precondition or model hypothesis.
    #[error("validation error: {0}")]
    Validation(String),

    /// A quadrature or series truncation could not meet its tolerance.
    #[error("accuracy budget exceeded: achieved {achieved:.3e}, requested {requested:.3e} ({context})")]
    Accuracy {
        achieved: f64,
        requested: f64,
        context: String,
    },

    /// The requested operation does not support this Levy basis.
    #[error("unsupported Levy basis: {0}")]
    Unsupported(String),

    /// The parameters fall outside the regime an operation is defined for.
    #[error("regime error: {0}")]
    Regime(String),

    /// An estimator could not find a well-conditioned window.
    #[error("window error: {message} (suggested theta range {suggested:?})")]
    Window {
        message: String,
        suggested: Option<(f64, f64)>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
