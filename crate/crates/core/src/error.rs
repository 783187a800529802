use thiserror::Error;

/// Errors raised by the estimation, testing and experiment layers.
#[derive(Debug, Error)]
pub enum AcbError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("bandwidth too small: {0}")]
    BandwidthTooSmall(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl AcbError {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            AcbError::Config(_) | AcbError::Shape(_) | AcbError::Io(_) => 2,
            AcbError::Domain(_) | AcbError::BandwidthTooSmall(_) | AcbError::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, AcbError>;
