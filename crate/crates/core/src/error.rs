use thiserror::Error;

/// Errors raised by the planning toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input lies outside the mathematical domain of a model function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A control setting outside `[-1, 1]`.
    #[error("inadmissible control u = {0}: settings must satisfy |u| <= 1")]
    Admissibility(f64),

    /// Malformed arguments: mismatched lengths, misaligned paths, bad counts.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// No admissible plan satisfies the trip constraints.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The grid time step violates the semi-Lagrangian foot-point bound.
    #[error("foot-point bound violated for grid time step {dt} s: {detail}")]
    Configuration { dt: f64, detail: String },

    /// A query fell outside the value grid.
    #[error("state (x = {x} m, v = {v} m/s, t = {t} s) lies outside the grid extent")]
    Extrapolation { x: f64, v: f64, t: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn infeasible(msg: impl Into<String>) -> Self {
        Error::Infeasible(msg.into())
    }
}
