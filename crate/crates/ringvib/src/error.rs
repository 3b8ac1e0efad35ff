use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid spline space: {0}")]
    InvalidSpace(String),
    #[error("parameter {value} lies outside the domain [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },
    #[error("derivative order {requested} exceeds degree {degree}")]
    DerivativeOrder { requested: usize, degree: usize },
    #[error("unsupported quadrature order {0}; expected 1..=30")]
    QuadratureOrder(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{0} matrix is not positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("{0} matrix is singular")]
    Singular(&'static str),
    #[error("symmetric eigen-iteration did not converge within {iterations} sweeps (dimension {dim})")]
    NoConvergence { iterations: usize, dim: usize },
    #[error("constraint rows are rank deficient (pivot {pivot:e})")]
    RankDeficientConstraints { pivot: f64 },
    #[error("mode {index} has a non-positive eigenvalue {lambda:e}")]
    ZeroEigenvalue { index: usize, lambda: f64 },
    #[error("normalized mode ranges do not overlap")]
    EmptyOverlap,
    #[error("fixture: {0}")]
    Fixture(String),
}

pub type Result<T> = std::result::Result<T, Error>;
