use thiserror::Error;

/// Errors raised while building instances or running solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape `{id}`: {reason}")]
    InvalidShape { id: String, reason: String },

    #[error("shape `{id}` footprint is not an integer number of basic units ({axis} span {span:.4})")]
    NonIntegralFootprint { id: String, axis: &'static str, span: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("multipath profile is invalid: {0}")]
    InvalidProfile(String),

    #[error("invalid rate configuration: {0}")]
    InvalidRateConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown {kind} id {id}")]
    UnknownId { kind: &'static str, id: usize },

    #[error("LP solution is not optimal (status {0:?})")]
    NotOptimal(crate::lp::LpStatus),

    #[error("brute force search exceeds {limit} nodes; use branch_and_bound instead")]
    SizeGuard { limit: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
