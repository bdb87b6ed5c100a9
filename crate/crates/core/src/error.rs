use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("no peak: {0}")]
    NoPeak(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Integration { .. } | Error::Invariant(_) | Error::NonConvergence(_)
        )
    }
}
