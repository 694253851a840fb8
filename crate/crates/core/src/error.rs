use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{family} expects {expected} widths, got {got}")]
    WidthCount {
        family: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid geometry parameters: {0}")]
    InvalidParams(String),
    #[error("resolution must be at least {min}, got {got}")]
    Resolution { min: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("matrix is singular (zero pivot at row {pivot})")]
    Singular { pivot: usize },
    #[error("residual {residual:e} exceeds tolerance {tolerance:e} after refinement")]
    Residual { residual: f64, tolerance: f64 },
    #[error("Newton failed at k = {k}: residual {residual:e} after {iterations} iterations")]
    NewtonDiverged {
        k: f64,
        residual: f64,
        iterations: usize,
    },
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("non-finite gradient entry {index}: {value}")]
    NonFiniteGradient { index: usize, value: f64 },
    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("ensemble has no members")]
    EmptyEnsemble,
    #[error("empty dataset")]
    EmptyDataset,
}
