use thiserror::Error;

/// Errors raised by distribution primitives, graph construction and inference.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("malformed model: {0}")]
    Model(String),

    #[error("invalid constraint: {0}")]
    Constraint(String),

    #[error("zero support mismatch at {location}: belief assigns mass where the factor is zero")]
    SupportMismatch { location: String },

    #[error("zero normaliser in {context}")]
    ZeroNormaliser { context: String },

    #[error(
        "fixed-point solve did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("no policy has a finite score")]
    NoFinitePolicy,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn shape_err(context: &str, expected: impl ToString, actual: impl ToString) -> Error {
    Error::Shape {
        context: context.to_string(),
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
