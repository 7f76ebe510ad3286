use std::path::PathBuf;

/// Errors raised across the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid field model: {0}")]
    InvalidModel(String),
    #[error("non-finite argument: {0}")]
    NonFinite(&'static str),
    #[error("y = {y} outside the open domain (-{m_abs}, {m_abs})")]
    Domain { y: f64, m_abs: f64 },
    #[error("root solver did not converge: {0}")]
    Convergence(String),
    #[error("n = {0} exceeds the enumeration limit of 30 spins")]
    Resource(usize),
    #[error("invalid replica spec: {0}")]
    InvalidSpec(String),
    #[error("configuration index {index} out of range for n = {n}")]
    Index { index: u64, n: usize },
    #[error("beta = {0} is not among the record's inverse temperatures")]
    UnknownBeta(f64),
    #[error("empty entropy bin at E = {0}")]
    EmptyBin(f64),
    #[error("need at least {needed} replicas, got {got}")]
    InsufficientReplicas { needed: usize, got: usize },
    #[error("beta = {beta} is not above beta_c = {beta_c}")]
    BetaBelowCritical { beta: f64, beta_c: f64 },
    #[error("window [{a}, {b}] is not covered by the retained top list")]
    WindowNotCovered { a: f64, b: f64 },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
