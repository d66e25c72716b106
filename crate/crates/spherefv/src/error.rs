//! Error type shared by the solver crates.

use thiserror::Error;

/// Failures raised by mesh construction, the time loop, or solver internals.
#[derive(Debug, Error)]
pub enum SolverError {
    /// Invalid mesh or geometric parameter.
    #[error("grid error: {0}")]
    Grid(String),
    /// The moving boundary collapsed to a non-positive radius.
    #[error("domain collapse: updated radius squared = {r_sq}")]
    DomainCollapse { r_sq: f64 },
    /// A field value became non-finite during time stepping.
    #[error("solution blew up at tau = {tau}: {what}")]
    BlowUp { tau: f64, what: String },
    /// Fixed-point iteration of an implicit step failed to converge.
    #[error("implicit step did not converge: residual {residual} after {iters} iterations")]
    NonConvergence { residual: f64, iters: usize },
    /// Breakdown inside a linear solver (zero pivot or loss of dominance).
    #[error("linear solver breakdown: {0}")]
    Numerical(String),
    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),
    /// Filesystem or CSV output failure.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SolverError {
    fn from(e: std::io::Error) -> Self {
        SolverError::Io(e.to_string())
    }
}

impl From<csv::Error> for SolverError {
    fn from(e: csv::Error) -> Self {
        SolverError::Io(e.to_string())
    }
}
