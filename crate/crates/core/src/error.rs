use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric failure in {what}: achieved residual {residual:.3e}")]
    Numeric { what: String, residual: f64 },

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("unsupported combination: {0}")]
    Capability(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("grid mismatch: expected {expected} values, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn numeric(what: impl Into<String>, residual: f64) -> Self {
        Error::Numeric {
            what: what.into(),
            residual,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
