use thiserror::Error;

/// Errors raised by the solver, the scheme and the experiment harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(
        "polytropic index n = {index} is unsupported: need 1 <= n < 5 \
         (n = 5, i.e. gamma = 6/5, has infinite support)"
    )]
    UnsupportedIndex { index: f64 },

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient resolution: {found} samples in window, need at least {needed}")]
    InsufficientResolution { found: usize, needed: usize },

    #[error("same-mass violation: initial mass {initial} differs from equilibrium mass {expected}")]
    MassMismatch { initial: f64, expected: f64 },

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),

    #[error(
        "mesh tangling at cell {cell}: r_n - r_(n-1) = {width:e} (the bound 1/2 <= (r_n - r_(n-1))/h <= 3/2 is lost)"
    )]
    MeshTangling { cell: usize, width: f64 },

    #[error("step failure at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },

    #[error("cannot fit decay: {0}")]
    CannotFit(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
