use thiserror::Error;

/// Errors raised by the estimators and their numerical kernels.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate projection: every index value falls into a single bin")]
    DegenerateProjection { theta: Vec<f64> },

    #[error("nonnegative least squares did not converge after {iterations} iterations")]
    NnlsNonConvergence { iterations: usize, best: Vec<f64> },

    #[error("linear constraints are infeasible")]
    Infeasible,

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("penalized spline fixed-point iteration did not converge after {iterations} iterations")]
    SplineNonConvergence { iterations: usize, alpha: Vec<f64> },

    #[error("invalid Cayley step: denominator {0} is not positive")]
    InvalidStep(f64),

    #[error("index parameter lies on the boundary theta[0] = 0")]
    BoundaryPoint,

    #[error("information matrix is singular (condition number {0:e})")]
    SingularInformation(f64),

    #[error("fit failed at theta = {theta:?}: {source}")]
    AtTheta { theta: Vec<f64>, source: Box<Error> },

    #[error("all {} starts failed; first error: {}", .0.len(), .0.first().map(String::as_str).unwrap_or("none"))]
    AllStartsFailed(Vec<String>),
}

impl Error {
    /// True for failures of an iterative numerical routine, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::InvalidInput(_) => false,
            Error::AtTheta { source, .. } => source.is_numerical(),
            _ => true,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
