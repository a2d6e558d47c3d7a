use thiserror::Error;

use crate::coeff_dsl::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    /// The d_j recursion hit a non-positive value, so μ is too large for the
    /// family at this degree.
    #[error("dominance violated: d_{index} = {value:e} is not positive")]
    DominanceViolation { index: usize, value: f64 },

    #[error("{solver} did not converge after {iterations} iterations")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("size limit exceeded: {what} would be {size}, cap is {cap}")]
    SizeLimit {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("invalid usage: {0}")]
    Usage(String),

    #[error("coefficient error: {0}")]
    Coefficient(String),

    #[error("cholesky factorization failed at row {row} (pivot {pivot:e}); matrix is not positive definite")]
    Factorization { row: usize, pivot: f64 },

    /// Right-hand matrix of an element pencil is not positive definite.
    #[error("element {element}: preconditioner pencil is not positive definite")]
    SingularElement { element: usize },

    #[error("lanczos did not converge after {iterations} iterations (best estimates [{lambda_min:e}, {lambda_max:e}], residuals [{residual_min:e}, {residual_max:e}])")]
    LanczosNoConvergence {
        iterations: usize,
        lambda_min: f64,
        lambda_max: f64,
        residual_min: f64,
        residual_max: f64,
    },

    #[error("pcg did not reach the tolerance after {iterations} iterations (final relative residual {final_residual:e})")]
    PcgNoConvergence {
        iterations: usize,
        final_residual: f64,
        history: Vec<f64>,
    },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical kind (factorization, convergence,
    /// dominance), as opposed to invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DominanceViolation { .. }
                | Error::NoConvergence { .. }
                | Error::Factorization { .. }
                | Error::SingularElement { .. }
                | Error::LanczosNoConvergence { .. }
                | Error::PcgNoConvergence { .. }
        )
    }
}
