//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures reported by constructors, transforms, solvers and the CLI layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A metric coefficient was zero, negative or not finite.
    #[error("metric coefficients must be positive and finite, got {0:?}")]
    NonPositiveMetric([f64; 3]),
    /// A state component was NaN or infinite.
    #[error("state contains a non-finite value")]
    NonFinite,
    /// Invalid closure data.
    #[error("invalid closure parameters: {0}")]
    InvalidParams(String),
    /// Inverse polynomial map evaluated on the boundary of the octant.
    #[error("polynomial coordinates {0:?} lie on the boundary; inverse map undefined")]
    BoundaryPoint([f64; 3]),
    /// A right-hand side was evaluated where it divides by zero.
    #[error("singular evaluation: {0}")]
    SingularEvaluation(String),
    /// Not enough samples for a finite-difference stencil or a fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// A seed point violates the type-14 constraint beyond tolerance.
    #[error("seed time {t0} too large: constraint residual {residual:e} exceeds {tolerance:e}")]
    SeedTooFar {
        /// Requested seed time.
        t0: f64,
        /// Observed constraint residual.
        residual: f64,
        /// Allowed residual.
        tolerance: f64,
    },
    /// Point outside the domain of a closed-form solution.
    #[error("out of domain: {0}")]
    OutOfDomain(String),
    /// Bisection endpoints do not bracket the completeness boundary.
    #[error("interval does not bracket the boundary: {0}")]
    NotBracketing(String),
    /// Invalid integrator settings.
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    /// Linear algebra failure.
    #[error("linear solve failed: {0}")]
    Linear(String),
    /// Input or output failure in the command-line layer.
    #[error("i/o: {0}")]
    Io(String),
}

/// Crate result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
