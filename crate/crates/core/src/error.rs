use thiserror::Error;

/// Errors raised by the geometry, flow and functional evaluators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum StarError {
    #[error("metric is not positive-definite (smallest eigenvalue {min_eigenvalue:e})")]
    NonPositiveDefinite { min_eigenvalue: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid index slot {slot} for a rank-{rank} tensor")]
    InvalidSlot { slot: usize, rank: usize },
    #[error("jet order {requested} unsupported (maximum {max})")]
    UnsupportedOrder { requested: usize, max: usize },
    #[error("insufficient jet order: need {needed}, have {have}")]
    InsufficientJet { needed: usize, have: usize },
    #[error("point {point:?} lies outside the analytic box")]
    OutsideDomain { point: Vec<f64> },
    #[error("operation requires a periodic torus domain")]
    NotTorus,
    #[error("positivity lost at t = {t}: smallest eigenvalue {min_eigenvalue:e}")]
    PositivityLost { t: f64, min_eigenvalue: f64 },
    #[error("step rejected at t = {t}: non-finite values")]
    StepRejected { t: f64 },
    #[error("scale parameter τ = {tau} is not positive")]
    TauUnderflow { tau: f64 },
    #[error("∫u dV = {integral} is not normalized (tolerance {tolerance:e})")]
    NotNormalized { integral: f64, tolerance: f64 },
    #[error("time window [{lo}, {hi}] exceeds the trajectory span [{start}, {end}]")]
    WindowExceedsTrajectory { lo: f64, hi: f64, start: f64, end: f64 },
    #[error("self-similar solution expired: σ(t) = {sigma}")]
    SelfSimilarExpired { sigma: f64 },
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, StarError>;

impl From<std::io::Error> for StarError {
    fn from(e: std::io::Error) -> Self {
        StarError::Io(e.to_string())
    }
}
