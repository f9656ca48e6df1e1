use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A function was evaluated outside the set where it is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("fugacity {phi} is outside the convergence domain [0, {phi_c})")]
    OutOfDomain { phi: f64, phi_c: f64 },

    #[error("series did not converge within {terms} terms (last relative term {last_relative:e})")]
    Budget { terms: usize, last_relative: f64 },

    #[error("density {rho} is at or beyond the saturation density (sup R ≈ {sup_estimate})")]
    Saturation { rho: f64, sup_estimate: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    Cfl { dt: f64, bound: f64 },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    Solver {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
