use thiserror::Error;

/// Errors raised by the solvers and their building blocks.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("infeasible: {reason} (max slack {max_slack:.3e})")]
    Infeasible { reason: String, max_slack: f64 },
    #[error("ill-conditioned: {0}")]
    IllConditioned(String),
    #[error("no usable subchannel: all gains are zero")]
    NoUsableSubchannel,
    #[error("internal inconsistency: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
