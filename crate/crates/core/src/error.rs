use thiserror::Error;

/// Errors produced by model evaluation, simulation, fitting and CEP computation.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation (negative time, non-positive scale, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is invalid.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A correlation matrix is not positive semi-definite.
    #[error("correlation matrix is not positive semi-definite (smallest pivot {pivot:.3e})")]
    NotPsd { pivot: f64 },

    /// The supplied data failed validation.
    #[error("data validation failed: {0}")]
    Data(String),

    /// A numerical routine failed to reach its tolerance.
    #[error("numerical failure: {message}")]
    Numerical { message: String, estimate: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
