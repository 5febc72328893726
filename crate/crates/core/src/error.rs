use thiserror::Error;

/// Errors produced by construction, geometry, and solver entry points.
///
/// Solver non-convergence is not an error: the solvers return their best
/// iterate together with a failure flag in [`crate::stats::SolveStats`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid convex body: {0}")]
    InvalidBody(String),

    #[error("unsupported family combination: {0}")]
    UnsupportedFamily(String),

    #[error("invalid domain shape: {0}")]
    InvalidShape(String),

    #[error("grid spacing h={h} too coarse for the domain: {reason}")]
    GridTooCoarse { h: f64, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("obstacle problem inconsistent: {0}")]
    InconsistentObstacles(String),

    #[error("Dykstra projection did not converge: gap {gap} after {cycles} cycles")]
    DykstraNonConvergence { gap: f64, cycles: usize },

    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("malformed field file: {0}")]
    MalformedField(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
