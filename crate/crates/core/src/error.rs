//! Error taxonomy shared by the whole crate.
//!
//! Variants are grouped by who is at fault: the caller handed us bad
//! parameters or bad data, or an internal numeric routine failed to reach its
//! accuracy contract. The CLI maps these groups onto distinct exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical or configuration parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A function argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative or adaptive numeric routine failed to converge.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A result was produced but its estimated accuracy violates the contract.
    #[error("accuracy loss: {0}")]
    Accuracy(String),

    /// Measured input data are malformed or physically impossible.
    #[error("data error: {0}")]
    Data(String),

    /// Every retained sample sits at full transmittance, so the fit has no
    /// information about the turbulence strength.
    #[error("degenerate data: all samples at full transmittance, no measurable turbulence")]
    NoMeasurableTurbulence,
}

pub type Result<T> = std::result::Result<T, Error>;
