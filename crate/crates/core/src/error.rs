use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("gamma function pole at x = {0}")]
    Pole(f64),
    #[error("{what} did not converge: {detail}")]
    NonConvergence { what: &'static str, detail: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("inversion failed at node {node} (u = {u}, t = {t}): non-finite value")]
    InversionFailure { node: usize, u: Complex64, t: f64 },
    #[error("tolerance not met in {what}: estimated error {achieved:e}")]
    ToleranceNotMet { what: &'static str, achieved: f64 },
    #[error("division guard tripped: {0}")]
    Singular(String),
    #[error("solver aborted at t = {t}: {reason}")]
    SolverAbort { t: f64, reason: String },
    #[error("unsupported combination: {0}")]
    Unsupported(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("at t = {t}: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
