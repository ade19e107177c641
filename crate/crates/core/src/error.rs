use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A point lies outside the configuration domain of a potential.
    #[error("point {point:?} lies outside the domain: {reason}")]
    Domain { point: Vec<f64>, reason: String },

    /// A tabulated potential was evaluated outside its sample range.
    #[error("x = {x} is outside the tabulated range [{lo}, {hi}]")]
    Range { x: f64, lo: f64, hi: f64 },

    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A computation would exceed a configured size cap.
    #[error("resource cap exceeded: {0}")]
    Resource(String),

    /// Richardson error estimate for an eigenvalue exceeded the tolerance.
    #[error("eigenvalue {level} not converged: error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    Accuracy {
        level: usize,
        estimate: f64,
        tolerance: f64,
    },

    /// The fitted eigenvalue growth model is unusable.
    #[error("tail model error: {0}")]
    Model(String),

    /// Not enough levels to control the truncated Boltzmann sum.
    #[error("truncation error at beta = {beta}: relative tail {relative_tail:e} exceeds {tolerance:e}; more levels are needed")]
    Truncation {
        beta: f64,
        relative_tail: f64,
        tolerance: f64,
    },

    /// The configuration integral diverges or failed to converge.
    #[error("integrability error: {0}")]
    Integrability(String),

    /// A function was called outside the regime its formula is valid in.
    #[error("contract violated: {0}")]
    Contract(String),

    /// An iterative method hit its iteration cap.
    #[error("no convergence after {iterations} iterations (gradient norm {gradient_norm:e})")]
    Convergence {
        iterations: usize,
        gradient_norm: f64,
    },

    /// Malformed text input (CSV, config).
    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
