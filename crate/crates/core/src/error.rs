use thiserror::Error;

/// Failure while evaluating an expression at a point.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("logarithm of non-positive real {0}")]
    LogNonPositive(f64),
    #[error("point supplies {supplied} coordinates but variable index {needed} was requested")]
    MissingVariable { needed: usize, supplied: usize },
    #[error("non-finite value produced")]
    NonFinite,
    #[error("{0}")]
    Other(String),
}

/// Expression parse failure with byte position.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at position {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("evaluation failed at {point:?}: {source}")]
    Eval {
        point: Vec<f64>,
        #[source]
        source: EvalError,
    },
    #[error("invalid weight family: {0}")]
    InvalidFamily(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("degree mismatch: {0}")]
    DegreeMismatch(String),
    #[error("quadrature budget exceeded: {nodes}^{axes} nodes")]
    QuadratureBudget { nodes: usize, axes: usize },
    #[error("point {0:?} is on or outside the domain boundary")]
    DomainBoundary(Vec<f64>),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("internal consistency: {0}")]
    Consistency(String),
    #[error("truncation: {0}")]
    Truncation(String),
    #[error("resolution: {0}")]
    Resolution(String),
    #[error("conjugate gradient did not converge in {iterations} iterations (last relative residual {last:.3e})")]
    NoConvergence {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn eval(point: &[f64], source: EvalError) -> Self {
        Error::Eval {
            point: point.to_vec(),
            source,
        }
    }
}
