use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected (dim {expected_dim}, level {expected_level}), found (dim {found_dim}, level {found_level})")]
    ShapeMismatch {
        expected_dim: usize,
        expected_level: usize,
        found_dim: usize,
        found_level: usize,
    },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("exponential needs a zero scalar part, found {0}")]
    NonZeroScalar(f64),

    #[error("logarithm needs a unit scalar part, found {0}")]
    NotGroupLike(f64),

    #[error("element is not in the Lie subspace (relative residual {residual:e})")]
    NotLie { residual: f64 },

    #[error("word {0} is not a Lyndon word")]
    NotLyndon(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown variable `{name}` at line {line}, column {column}")]
    UnknownVariable { name: String, line: usize, column: usize },

    #[error("unknown field system `{name}`; available: {available}")]
    UnknownFields { name: String, available: String },

    #[error("covariance matrix is not positive definite even after jitter")]
    NotPositiveDefinite,

    #[error("path is not representable at this resolution (relative residual {residual:e})")]
    NotRepresentable { residual: f64 },

    #[error("ODE step size underflow at parameter {at}")]
    StepSizeUnderflow { at: f64 },

    #[error("outside local solvability region: residual {residual:e} after {iterations} Newton iterations")]
    OutsideSolvability { residual: f64, iterations: usize },

    #[error("outside locality radius: stage {stage} contracted by only {ratio}")]
    OutsideLocality { stage: usize, ratio: f64 },

    #[error("join did not reach tolerance after {stages} stages (distance {distance:e})")]
    NotConverged { stages: usize, distance: f64 },

    #[error("degenerate samples: {0}")]
    DegenerateSamples(String),

    #[error("need at least {needed} points, found {found}")]
    TooFewPoints { needed: usize, found: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
