use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid bath: {0}")]
    InvalidBath(String),

    #[error("spectral-density integral diverges: {0}")]
    Integration(String),

    #[error("frequency quadrature did not converge at t = {t} fs (relative change {change:e})")]
    Quadrature { t: f64, change: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("dissipation rate plateau not reached (relative drift {drift:e})")]
    NonConvergence { drift: f64 },

    #[error("invalid pulse: {0}")]
    InvalidPulse(String),

    #[error("pulse discretization tolerance {tolerance:e} not reached with {max_segments} segments")]
    ToleranceUnreachable { tolerance: f64, max_segments: usize },

    #[error("density-matrix integration failed: {0}")]
    IntegrationFailure(String),

    #[error("jump probability {probability} > 1 at t = {t} fs; reduce dt")]
    StepTooLarge { t: f64, probability: f64 },

    #[error("trajectory norm collapsed below 1e-12 at t = {t} fs")]
    TrajectoryCollapse { t: f64 },

    #[error("observable outside its domain: {0}")]
    Domain(String),

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("config violates {invariant}")]
    ConfigInvariant { invariant: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
