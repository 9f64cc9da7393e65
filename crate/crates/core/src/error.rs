use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// The state lies outside the domain of the vector field (primary
    /// collision in CR3BP, non-positive semi-latus rectum in MEE, ...).
    #[error("state outside model domain: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("integration failed on segment {segment}: {reason}")]
    Propagation { segment: usize, reason: String },

    #[error("integrator failure: {0}")]
    Integrator(String),

    #[error("assembly error in {constraint}: {reason}")]
    Assembly { constraint: String, reason: String },

    #[error("conic solver: {0}")]
    Solver(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// Attach a segment index to a propagation-type failure.
    pub fn on_segment(self, segment: usize) -> Self {
        match self {
            Error::Propagation { reason, .. } => Error::Propagation { segment, reason },
            Error::Integrator(reason) | Error::Domain(reason) => {
                Error::Propagation { segment, reason }
            }
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
