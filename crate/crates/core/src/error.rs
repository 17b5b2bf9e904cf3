use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum FphandError {
    #[error("chart coordinate {coord} outside [{lo}, {hi}]")]
    ChartDomain { coord: f64, lo: f64, hi: f64 },

    #[error("contact at a chart singularity ({dist:.3e} mm from the pole)")]
    ChartSingularity { dist: f64 },

    #[error("design parameters invalid: {0}")]
    Design(String),

    #[error("value {value} outside bounds [{lo}, {hi}] in component {index}")]
    OutOfBounds { index: usize, value: f64, lo: f64, hi: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("state too far from the contact manifold (residual {residual:.3e} mm)")]
    StaleState { residual: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("seed design rejected: {0}")]
    Seed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, FphandError>;
