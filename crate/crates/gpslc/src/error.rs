use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite even with jitter {max_jitter:e} (dim {dim})")]
    NotPositiveDefinite { dim: usize, max_jitter: f64 },

    #[error("matrix is not symmetric: max |M - M'| = {max_asymmetry:e} exceeds tolerance")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("kernel input row is missing required field `{field}`")]
    MissingField { field: &'static str },

    #[error("diagonal noise requested for a rectangular (cross) kernel matrix")]
    NoiseOnRectangular,

    #[error("{what} must be positive, got {value}")]
    NonPositiveInput { what: &'static str, value: f64 },

    #[error("inverse-gamma proposal shape {shape} <= 1 for value {value} (mean undefined)")]
    ShapeTooSmall { value: f64, shape: f64 },

    #[error("slice sampler failed to accept within {cap} shrink steps")]
    IterationCap { cap: usize },

    #[error("treatment is not binary at instance {index}: {value}")]
    NonBinaryTreatment { index: usize, value: f64 },

    #[error("object `{label}` has {size} instance(s); at least {min} required")]
    ObjectTooSmall {
        label: String,
        size: usize,
        min: usize,
    },

    #[error("no structural parameters satisfy the moment equations: {reason}")]
    NoSolution { reason: String },

    #[error("all importance weights underflowed for object `{label}`")]
    DegenerateWeights { label: String },

    #[error("intervention grids do not match: {reason}")]
    GridMismatch { reason: String },

    #[error("csv schema error at row {row}, column `{column}`: {message}")]
    Schema {
        row: usize,
        column: String,
        message: String,
    },

    #[error("csv row {row} has {got} fields, expected {expected}")]
    NonRectangular {
        row: usize,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
