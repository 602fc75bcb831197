use alloc::string::String;

use crate::axis::AxisPair;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {left_width}x{left_height} vs {right_width}x{right_height}")]
    DimensionMismatch {
        left_width: usize,
        left_height: usize,
        right_width: usize,
        right_height: usize,
    },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate density: grid has no positive mass")]
    DegenerateDensity,
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid beam state: {0}")]
    InvalidState(String),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("transport map is not invertible (det = {det:e})")]
    NonInvertibleMap { det: f64 },
    #[error("collapsed projection on {pair}: smallest marginal eigenvalue {min_eigenvalue:e}")]
    CollapsedProjection { pair: AxisPair, min_eigenvalue: f64 },
    #[error("need at least {needed} samples, found {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite loss at sample {sample}")]
    NonFiniteLoss { sample: usize },
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss:e}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("measurement fault at t = {t}: cost {cost}")]
    MeasurementFault { t: f64, cost: f64 },
    #[error("timestamp mismatch: expected t = {expected}, found {found}")]
    TimestampMismatch { expected: f64, found: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
