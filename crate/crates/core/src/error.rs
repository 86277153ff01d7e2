use thiserror::Error;

#[derive(Debug, Error)]
pub enum PassError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("user {user} co-located with PA ({waveguide}, {pa})")]
    CoLocated {
        user: usize,
        waveguide: usize,
        pa: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("penalty collapse: rho = {0:e} fell below the divergence floor")]
    PenaltyCollapse(f64),

    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, PassError>;
