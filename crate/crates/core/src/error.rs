use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("ambient dimension {0} is not of the form 2k+2 with k >= 1")]
    BadDimension(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point is not on the unit sphere (|x| = {norm})")]
    NotUnit { norm: f64 },

    #[error("vector is not tangent at its base point (<v, x> = {inner})")]
    NotTangent { inner: f64 },

    #[error("field value is not a unit vector (|v| = {norm})")]
    NotUnitField { norm: f64 },

    #[error("could not complete an orthonormal frame (found {found} of {needed} legs)")]
    DegenerateFrame { found: usize, needed: usize },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid quadrature resolution: {0}")]
    InvalidResolution(String),

    #[error("normalization failed: unnormalized field has norm {norm:e} < 1e-8")]
    Normalization { norm: f64 },

    #[error("finite-difference step underflow (step {step:e})")]
    StepUnderflow { step: f64 },

    #[error("quadrature rule has no boundary nodes")]
    EmptyBoundary,

    #[error("Jacobian determinant {det:e} is not positive at t = {t}")]
    NonPositiveJacobian { det: f64, t: f64 },

    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),

    #[error("matrix is not trace-free (trace = {trace:e})")]
    NotTraceFree { trace: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
