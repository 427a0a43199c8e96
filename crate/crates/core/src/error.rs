use thiserror::Error;

/// Errors produced anywhere in the persuasion pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid posterior: {0}")]
    InvalidPosterior(String),

    #[error("invalid signaling scheme: {0}")]
    InvalidScheme(String),

    /// A spec or instance field failed validation; `field` is a path such as
    /// `constraints[1].params.references`.
    #[error("{field}: {message}")]
    InvalidField { field: String, message: String },

    #[error("posterior {point:?} is not covered by any utility piece")]
    Uncovered { point: Vec<f64> },

    #[error("grid would have {vertices} vertices, above the cap of {cap}")]
    GridTooLarge { vertices: u128, cap: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("no valid signaling scheme: {0}")]
    Infeasible(String),

    #[error(
        "strengthened problem is infeasible: eps = {eps} exceeds the admissible range for Slater margin {margin}"
    )]
    SlaterMarginTooSmall { eps: f64, margin: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("smoothing needs a contraction below {required:e}, beyond double precision")]
    PrecisionUnderflow { required: f64 },

    #[error("input violates ex ante constraint {index}: E[f] = {value} > {bound}")]
    ExAnteViolated {
        index: usize,
        value: f64,
        bound: f64,
    },

    #[error("constraint {index} is not convex: {reason}")]
    NonConvex { index: usize, reason: String },

    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fixture check failed: {0}")]
    FixtureMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn field_err(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::InvalidField {
        field: field.into(),
        message: message.into(),
    }
}
