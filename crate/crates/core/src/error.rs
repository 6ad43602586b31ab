use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("tabulated kernel queried at t = {t}, beyond last sample at {last}")]
    Extrapolation { t: f64, last: f64 },

    /// Game or scenario parameters violate a model requirement.
    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("investor index {index} out of range for {count} investors")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{context}: linear system is singular or ill-conditioned (condition estimate {condition:.3e})")]
    Singular { context: String, condition: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("eigenvalue computation failed: {0}")]
    Eigen(String),

    #[error("inconsistent solution: {0}")]
    Inconsistent(String),

    #[error("sweep failed at {parameter} = {value}: {source}")]
    Sweep {
        parameter: String,
        value: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for failures of the numerical solvers, as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::Singular { .. }
            | Error::NonFinite(_)
            | Error::Eigen(_)
            | Error::Inconsistent(_) => true,
            Error::Sweep { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}
