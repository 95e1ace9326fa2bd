use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("integration did not converge on [{lower}, {upper}] (estimate {estimate:e}, error {error:e})")]
    Integration {
        lower: f64,
        upper: f64,
        estimate: f64,
        error: f64,
    },

    #[error("no root in search interval: {0}")]
    Infeasible(String),

    #[error("conformal time requires omega_radiation > 0 to anchor the hot big bang at eta = 0")]
    NoRadiation,

    #[error("catalog: {0}")]
    Catalog(String),

    #[error("io: {0}")]
    Io(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Wraps an error with the pipeline stage that produced it.
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, with stage labels stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
