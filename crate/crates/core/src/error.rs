use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A function was evaluated outside of its domain (for instance `x < 0`).
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter set failed validation.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    /// The configuration is degenerate with respect to the analysis requested
    /// (vanishing curvature, `A = 0`, tolerance-sensitive classification).
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    /// Two-point fit of `psi2` is impossible for the given points.
    #[error("infeasible fit: {0}")]
    Infeasible(String),

    /// Root finding or bracketing did not converge.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("classification failed: {0}")]
    Classification(String),

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
