use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    /// The private lead drifts upward (p2 >= p3): no stationary distribution
    /// exists. Under the Poisson mapping this is exactly an attacker majority.
    #[error("divergent lead: p2={p2} >= p3={p3}; attacker majority has no stationary regime")]
    DivergentLead { p2: f64, p3: f64 },

    #[error(
        "power iteration did not converge: residual {residual:e} after {iterations} iterations"
    )]
    NoConvergence { iterations: usize, residual: f64 },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
