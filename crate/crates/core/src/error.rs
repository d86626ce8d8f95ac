use thiserror::Error;

/// Errors raised by the core engine.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    /// A graph edit would close a directed cycle.
    #[error("edit rejected: closes a directed cycle")]
    Rejected,
    #[error("configuration error: {0}")]
    Config(String),
    /// Every particle weight became zero after reweighting.
    #[error("degenerate posterior: all particle weights vanished")]
    DegeneratePosterior,
    /// No candidate pair is left to query.
    #[error("candidate set exhausted")]
    Exhausted,
    /// The human oracle did not answer in time.
    #[error("oracle timed out waiting for an answer")]
    OracleTimeout,
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
