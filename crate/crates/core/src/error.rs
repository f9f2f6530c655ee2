use thiserror::Error;

/// Errors raised by the library. The CLI maps `Config` to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("configuration error: {0}")]
    Config(String),
    /// The reference level is too coarse for the requested accuracy.
    #[error("reference level eps_ref = {eps_ref} too coarse: bias bound {bias:.3e} exceeds {allowed:.3e}; use eps_ref <= {required:.3e}")]
    ReferenceBias { eps_ref: f64, bias: f64, allowed: f64, required: f64 },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
