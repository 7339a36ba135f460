//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    /// Evaluation outside a function's domain of validity.
    #[error("domain error: {0}")]
    Domain(String),

    /// A quadrature did not reach the requested tolerance within budget.
    /// Carries the best estimate and its error estimate.
    #[error("quadrature did not converge over [{lo}, {hi}]: best estimate {estimate} (error {error_estimate})")]
    QuadratureNonConvergence {
        lo: f64,
        hi: f64,
        estimate: f64,
        error_estimate: f64,
    },

    /// An integrand evaluated to a non-finite value.
    #[error("integrand returned a non-finite value at x = {x}")]
    BadIntegrand { x: f64 },

    /// Invalid construction of a domain type (violated invariant).
    #[error("invalid parameter: {0}")]
    Invalid(String),

    /// Fixed-point iteration exhausted its iteration budget.
    #[error("fixed-point iteration did not converge after {iterations} sweeps (last update {final_delta}) at alpha0 = {alpha0}")]
    FixedPointDiverged {
        alpha0: f64,
        iterations: usize,
        final_delta: f64,
    },

    /// Root bracketing failed: no sign change over the given interval.
    #[error("no sign change over bracket [{lo}, {hi}]: R(lo) = {f_lo}, R(hi) = {f_hi}")]
    NoSignChange {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    /// Root refinement failed to meet the residual tolerance.
    #[error("root refinement stalled at alpha0 = {alpha0} with residual {residual} (tolerance {tol})")]
    RootStalled { alpha0: f64, residual: f64, tol: f64 },

    /// A certificate quantity could not be computed.
    #[error("certificate: {0}")]
    Certificate(String),

    /// A solve was requested without a usable bracket.
    #[error("no bracket for the front coefficient: {0}")]
    BracketRequired(String),

    /// Failure attributed to an inner solve at a specific probe.
    #[error("probe at alpha0 = {alpha0} failed: {source}")]
    Probe {
        alpha0: f64,
        #[source]
        source: Box<Error>,
    },

    /// Config file problem, with 1-based line number when known.
    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    /// Malformed solution file.
    #[error("solution file error: {0}")]
    SolutionFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attach a probe location to an inner error.
    pub fn at_probe(self, alpha0: f64) -> Error {
        Error::Probe {
            alpha0,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
