use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation received a parameter outside its domain.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A delay bound or approximation was requested where its hypotheses fail
    /// (non-positive drift, empty feasible window range).
    #[error("bound inapplicable: {0}")]
    BoundInapplicable(String),

    /// Threshold calibration could not bracket or reach the target run length.
    #[error("calibration failed: {0}")]
    CalibrationFailed(String),

    /// Malformed or inconsistent experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
