use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("numeric iteration did not converge (residual {residual})")]
    NonConvergence { residual: f64 },
    #[error("parallax angle {angle} rad is below the minimum")]
    LowParallax { angle: f64 },
    #[error("triangulated point fails the cheirality check")]
    Cheirality,
    #[error("degenerate configuration: {0}")]
    Degenerate(&'static str),
    #[error("no essential matrix factorization has a majority of points in front of both cameras")]
    AmbiguousDecomposition,
    #[error("insufficient data: need {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("robust estimation failed: {0}")]
    EstimationFailure(String),
    #[error("pose refinement failed")]
    RefinementFailure,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(&'static str),
    #[error("invalid optimization window: {0}")]
    InvalidWindow(String),
    #[error("image {width}x{height} too small for {levels} pyramid levels")]
    ImageTooSmall { width: usize, height: usize, levels: usize },
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("trajectory association produced no pairs")]
    Association,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("I/O error: {0}")]
    Io(String),
    #[error("tracking lost")]
    TrackingLost,
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
