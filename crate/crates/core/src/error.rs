use thiserror::Error;

pub type Result<T> = std::result::Result<T, QpError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("phase eps = {eps} lies outside the strip |eps| <= {delta}")]
    StripViolation { eps: f64, delta: f64 },

    #[error("B is ill-conditioned at step {step} (condition estimate {condition:.3e})")]
    IllConditionedBlock { step: usize, condition: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("frequency {omega} is rational within working precision (denominator {denominator})")]
    NotDiophantine { omega: f64, denominator: u64 },

    #[error("invalid sampling function: {0}")]
    InvalidSampling(String),

    #[error("propagator failed at grid point {index}: {source}")]
    GridPoint {
        index: usize,
        #[source]
        source: Box<QpError>,
    },

    #[error("energy {energy} is singular for this volume (denominator determinant vanishes)")]
    SingularEnergy { energy: num_complex::Complex64 },

    #[error("contour degenerate: {0}")]
    ContourDegenerate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unknown built-in family `{0}`")]
    UnknownFamily(String),

    #[error("no admissible shift found: {0}")]
    LemmaViolation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}
