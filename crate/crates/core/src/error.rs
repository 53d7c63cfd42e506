use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Cholesky factorization failed for {what}")]
    Cholesky { what: String },

    #[error("non-finite value in block `{block}` at iteration {iteration}")]
    NonFinite { block: &'static str, iteration: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}:{line}: {message}")]
    Input {
        path: String,
        line: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Cholesky { .. } | Error::NonFinite { .. } => ErrorClass::Numerical,
            Error::InvalidParameter(_) | Error::Config(_) => ErrorClass::Usage,
            Error::Data(_) | Error::Input { .. } | Error::Io(_) | Error::Csv(_) | Error::Json(_) => {
                ErrorClass::Data
            }
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Usage => 1,
            ErrorClass::Data => 2,
            ErrorClass::Numerical => 3,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn cholesky(what: impl Into<String>) -> Self {
        Error::Cholesky { what: what.into() }
    }
}
