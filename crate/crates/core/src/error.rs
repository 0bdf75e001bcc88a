use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("covariance matrix is not positive definite (pivot {pivot} of {dim})")]
    PositiveDefiniteness { pivot: usize, dim: usize },

    #[error("information matrix is singular or indefinite")]
    SingularInformation,

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("value out of range: {0}")]
    Range(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Data-side failures as opposed to numerical ones.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidData(_)
                | Error::DegenerateInput(_)
                | Error::Parse { .. }
                | Error::Range(_)
                | Error::Io(_)
        )
    }
}
