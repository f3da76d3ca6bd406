use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("invalid layer: {0}")]
    InvalidLayer(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible allocation: {}", .0.join("; "))]
    InfeasibleAllocation(Vec<String>),

    #[error("underdetermined fit: {0}")]
    Underdetermined(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence { solver: &'static str, iterations: usize, residual: f64 },

    #[error("ADMM local update failed for device {device}: residual {residual:.3e}")]
    LocalUpdate { device: usize, residual: f64 },

    #[error("bisection upper bound {bound:e} too small for the {constraint} constraint")]
    Bisection { constraint: &'static str, bound: f64 },

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier, used in machine-readable CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "invalid-params",
            Error::InvalidLayer(_) => "invalid-layer",
            Error::Domain(_) => "domain",
            Error::InfeasibleAllocation(_) => "infeasible-allocation",
            Error::Underdetermined(_) => "underdetermined",
            Error::EmptyInput(_) => "empty-input",
            Error::Convergence { .. } => "convergence",
            Error::LocalUpdate { .. } => "local-update",
            Error::Bisection { .. } => "bisection",
            Error::TooLarge(_) => "too-large",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
