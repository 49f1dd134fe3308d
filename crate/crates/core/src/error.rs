use thiserror::Error;

/// Errors surfaced by the geometry and solver layers.
#[derive(Debug, Error)]
pub enum SaddleError {
    #[error("tangent vectors have different base points")]
    BaseMismatch,

    #[error("points live on different manifolds")]
    ManifoldMismatch,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point violates the manifold constraint: {0}")]
    OffManifold(String),

    #[error("step norm {step_norm} exceeds the retraction domain radius {radius}")]
    RetractionDomain { step_norm: f64, radius: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("internal invariant violated: {0}")]
    InternalInvariant(String),

    #[error("trace/objective mismatch: {0}")]
    TraceSchema(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, SaddleError>;
