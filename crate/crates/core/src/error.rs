//! Error taxonomy for the solver library.
//!
//! Three broad classes map onto the CLI exit codes:
//!
//! * [`Error::Config`] — invalid parameters or inputs (exit code 1),
//! * [`Error::Numerical`] — a linear solve, eigensolve, or quadrature that
//!   cannot produce a finite answer (exit code 2),
//! * [`Error::NonConvergence`] — an iterative solver that ran out of
//!   iterations while still making sense numerically (exit code 3).

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or input data.
    #[error("config error: {0}")]
    Config(#[from] ConfigError),

    /// A numerical operation failed outright (non-finite values, impossible
    /// request, or an inconsistent input file).
    #[error("numerical error: {0}")]
    Numerical(#[from] NumericalError),

    /// An iterative solver exhausted its iteration budget.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        /// Iterations performed before giving up.
        iterations: usize,
        /// Final residual in the solver's own norm.
        residual: f64,
    },

    /// Filesystem / serialization problems while writing or reading artifacts.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Rejected configuration. Every variant names the offending precondition.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("dimension must be an integer >= 3, got {0}")]
    DimensionTooSmall(usize),

    #[error("ntheta must be even (the reflection theta -> pi - theta must map nodes to nodes), got {0}")]
    OddTheta(usize),

    #[error("grid too coarse: need nr >= {min_nr} and ntheta >= {min_ntheta}, got {nr} x {ntheta}")]
    GridTooCoarse {
        nr: usize,
        ntheta: usize,
        min_nr: usize,
        min_ntheta: usize,
    },

    #[error("{name} must satisfy {requirement}, got {value}")]
    ParameterOutOfRange {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },

    /// In dimension four the problem is only well posed for lambda away from
    /// the Dirichlet spectrum; `lambda` collided with eigenvalue number `index`.
    #[error("in dimension 4, lambda must not be a Dirichlet eigenvalue; lambda = {lambda} matches eigenvalue {index} ({eigenvalue})")]
    LambdaOnSpectrum {
        lambda: f64,
        index: usize,
        eigenvalue: f64,
    },

    #[error("empty {0} range")]
    EmptyRange(&'static str),

    #[error("cannot parse {what}: {detail}")]
    Parse { what: &'static str, detail: String },
}

/// Failures of the numerical core.
#[derive(Debug, Error)]
pub enum NumericalError {
    #[error("requested {requested} eigenpairs but the reduced grid supports at most {available}")]
    EigenRequestTooLarge { requested: usize, available: usize },

    /// The spectrum did not reach past `lambda`, so the subspace dimension m
    /// cannot be certified; ask for more eigenpairs.
    #[error("spectrum of length {computed} does not bracket lambda = {lambda}; request more eigenpairs")]
    SpectrumTooShort { computed: usize, lambda: f64 },

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("fiber projection drove t to {t:.3e}; the direction has no positive fiber maximum at this discretization")]
    FiberCollapse { t: f64 },

    #[error("field file invalid: {0}")]
    FieldFormat(String),

    #[error("zero field where a nonzero field is required ({0})")]
    ZeroField(&'static str),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the CLI maps this error to.
    ///
    /// 0 is success (never produced by an error), 1 config, 2 numerical,
    /// 3 non-convergence. I/O problems count as config-level failures: they
    /// are environmental, not numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) => 1,
            Error::Numerical(_) => 2,
            Error::NonConvergence { .. } => 3,
        }
    }
}
