use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter lies outside its admissible domain.
    #[error("parameter domain: {0}")]
    Domain(String),

    /// A solver or sampler was configured in a way it cannot honour
    /// (stability bound, under-resolved noise, mismatched axes).
    #[error("solver configuration: {0}")]
    Config(String),

    /// A numerical routine failed its own convergence check.
    #[error("accuracy: {0}")]
    Accuracy(String),

    /// Not enough samples to form the requested estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Implied volatility has no root inside the no-arbitrage bracket.
    #[error("no root: {0}")]
    NoRoot(String),

    /// NaN or infinity appeared during a solve.
    #[error("numerical breakdown: {0}")]
    Breakdown(String),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
