use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {x} lies outside the domain [{a}, {b}]")]
    OutOfDomain { x: f64, a: f64, b: f64 },

    /// Two or more basis breakpoints coincide (within the dedup tolerance) or
    /// the Gram matrix lost positive definiteness.
    #[error("singular basis: {0}")]
    SingularBasis(String),

    /// Every start of the residual minimization ended on a singular basis.
    #[error("degenerate residual: no start produced a usable knot configuration")]
    DegenerateResidual,

    #[error("closed-form solution unavailable: {0}")]
    Unavailable(String),

    /// Symmetric factorization of a matrix that should be SPD failed.
    #[error("factorization of {what} failed (condition estimate {condition:e})")]
    Factorization { what: String, condition: f64 },

    #[error("uzawa iteration {k}: {source}")]
    Iteration {
        k: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
