//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Dataset or vector dimensions are inconsistent.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An input value is unusable (zero vector, non-positive potential coordinate, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The initialization has no component in the relevant data span.
    #[error("degenerate initialization: {0}")]
    DegenerateInitialization(String),

    /// A training run produced a non-finite coordinate.
    #[error("divergence at step {step}")]
    Divergence { step: usize },

    /// A landscape query was made at a point outside the global-minimum set.
    #[error("invalid point: {0}")]
    InvalidPoint(String),

    /// An increment-statistics window is empty or out of range.
    #[error("invalid window: {0}")]
    InvalidWindow(String),

    /// A numeric evaluation returned a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),
}
