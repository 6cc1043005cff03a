use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tower spec: {0}")]
    InvalidSpec(String),

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cylinder basis needs {cells} cells, above the cap {cap}; depth {suggested} would fit")]
    BasisTooLarge {
        cells: usize,
        cap: usize,
        suggested: usize,
    },

    #[error("vector has {got} entries but the basis has {expected} cells")]
    VectorLength { got: usize, expected: usize },

    #[error("system is not expanding on average: estimated exponent {0}")]
    NotExpanding(f64),

    #[error("fiber increments escape the geometric envelope at step {step}: |term| = {value}, envelope = {envelope}")]
    NonContractingFiber {
        step: usize,
        value: f64,
        envelope: f64,
    },

    #[error("estimate unstable: {0}")]
    Unstable(String),

    #[error("config error at {location}: {message}")]
    Config { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            location: location.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
