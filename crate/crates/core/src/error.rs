use thiserror::Error;

/// Errors raised across the toolkit.
///
/// The CLI maps `Config` and `Parameter` to exit code 1 and every other
/// variant to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("graph generation failed: {0}")]
    Generation(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("unsupported: {0}")]
    Capability(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("trial {trial} (seed {seed}) failed: {source}")]
    Trial {
        trial: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Whether the error stems from user input rather than from the numerics.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Config(_) | Error::Parameter(_) => true,
            Error::Trial { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}
