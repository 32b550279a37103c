use thiserror::Error;

/// Errors produced by the geometry, quermassintegral, comparison-function and
/// flow routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular ratio: sigma_{k} vanishes, spectrum left the Gamma_{k} cone")]
    SingularRatio { k: usize },

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("unsupported grid: {0}")]
    UnsupportedGrid(String),

    #[error("radius out of range at node {node}: rho = {rho}")]
    RadiusOutOfRange { node: usize, rho: f64 },

    #[error("geometry error at node {node}: {reason}")]
    Geometry { node: usize, reason: String },

    #[error("flow breakdown at node {node}: {reason} (kappa = {kappa:?})")]
    FlowBreakdown {
        node: usize,
        reason: String,
        kappa: Vec<f64>,
    },

    #[error("step rejected: {0}")]
    StepRejected(String),

    #[error("unsupported formula: {0}")]
    UnsupportedFormula(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
