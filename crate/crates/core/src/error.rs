use thiserror::Error;

/// Failures raised by the model, its return map and the certificate pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("backward flow would reverse through a return tube (requested {requested}, available {available})")]
    BackwardThroughTube { requested: f64, available: f64 },
    #[error("point lies on the stable manifold of the singularity (x = 0) and never exits the linear block")]
    OnStableManifold,
    #[error("point lies on the discontinuity line x = 0 of the return map")]
    DomainGamma,
    #[error("state is not valid for its region: {0}")]
    InvalidState(String),
    #[error("no periodic point found: {0}")]
    NoneFound(String),
    #[error("orbit is degenerate: {0}")]
    DegenerateOrbit(String),
    #[error("chart half-width {mu} is too large: {reason}")]
    MuTooLarge { mu: f64, reason: String },
    #[error("projected points are dense at the chart resolution; no gap interval")]
    NoGap,
    #[error("insufficient sampling: {0}")]
    InsufficientSampling(String),
    #[error("invalid specification instance: {0}")]
    InvalidInstance(String),
}

pub type Result<T> = std::result::Result<T, Error>;
