use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid input: {0}")]
    Domain(String),

    /// Matrix or vector shapes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The residual bound cannot be met by any admissible solution.
    #[error("infeasible residual bound {bound:.6e}: minimal achievable residual is {min_residual:.6e}")]
    Infeasible { bound: f64, min_residual: f64 },

    /// The focusing fit is rank deficient.
    #[error("singular focusing fit at {frequency_hz} Hz (condition number {condition:.3e})")]
    SingularFocusing { frequency_hz: f64, condition: f64 },

    /// A numerical routine broke down.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
