use std::fmt;

/// Error type shared by every module of the crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A constructor or operation received parameters violating its preconditions.
    InvalidParameter(String),
    /// Array/operator dimensions do not match.
    DimensionMismatch(String),
    /// A Fock basis or tensor object would exceed the desk-scale state budget.
    TooLarge { requested: usize, limit: usize },
    /// A field developed non-finite entries during time evolution.
    NonFinite(String),
    /// A mollified kernel is not resolved by the physical grid.
    UnderResolved { support_cells: f64, needed: f64 },
    /// Requested time lies outside the Dyson series' convergence radius.
    OutsideConvergenceRadius { t: f64, t0: f64 },
    /// An estimator was asked to run on an empty ensemble.
    EmptyEnsemble,
    /// Division by a vanishing norm (e.g. a zero field in a norm ratio).
    ZeroNorm,
    /// An iterative solver failed to converge.
    NoConvergence(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::DimensionMismatch(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::TooLarge { requested, limit } => write!(
                f,
                "state space too large: {requested} states exceeds the limit of {limit}"
            ),
            Error::NonFinite(msg) => write!(f, "non-finite value encountered: {msg}"),
            Error::UnderResolved { support_cells, needed } => write!(
                f,
                "mollifier support covers {support_cells:.2} grid cells but at least {needed} \
                 are required; raise the physical sample count P or use a larger epsilon"
            ),
            Error::OutsideConvergenceRadius { t, t0 } => write!(
                f,
                "time {t} lies outside the series convergence radius {t0}; evolve directly or \
                 split the time interval"
            ),
            Error::EmptyEnsemble => write!(f, "estimator called on an empty ensemble"),
            Error::ZeroNorm => write!(f, "norm ratio undefined for a zero field"),
            Error::NoConvergence(msg) => write!(f, "iteration failed to converge: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
