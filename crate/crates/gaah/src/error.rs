use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{field}: {msg}")]
    Param { field: String, msg: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension {dim} exceeds the dense threshold {threshold}; use Krylov propagation instead")]
    TooLarge { dim: usize, threshold: usize },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("Krylov propagation failed: {0}")]
    Krylov(String),

    #[error("integrator failed: {0}")]
    Integrator(String),

    #[error("degenerate selection: {0}")]
    Degenerate(String),

    #[error("infeasible target: {0}")]
    Infeasible(String),

    #[error("ill-conditioned matrix: {0}")]
    IllConditioned(String),

    #[error("unknown preset `{name}`; available presets: {available}")]
    UnknownPreset { name: String, available: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(field: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Param { field: field.into(), msg: msg.into() }
}
