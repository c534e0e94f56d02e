use thiserror::Error;

/// Errors raised by the library.
///
/// Verification outcomes (violations, unstable pairs) are data returned in
/// reports, never errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid measure spec: {0}")]
    InvalidSpec(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("operation not supported: {0}")]
    Unsupported(String),

    #[error("site {site} is unbalanced: outgoing mass {mass} (deficit {deficit})")]
    Unbalanced { site: usize, mass: f64, deficit: f64 },

    #[error("center {center} is unbalanced: incoming mass {mass} (deficit {deficit})")]
    UnbalancedCenter { center: usize, mass: f64, deficit: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
