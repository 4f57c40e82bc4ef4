use thiserror::Error;

/// Errors produced by planning, learning and instance handling.
#[derive(Debug, Error)]
pub enum FairError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Some agent cannot obtain positive value under any policy, so the
    /// Nash objective is `-inf` everywhere.
    #[error("degenerate instance: agent {agent} has zero value under every policy")]
    Degenerate { agent: usize },

    #[error("planner failure at episode {episode}: {source}")]
    Episode {
        episode: usize,
        #[source]
        source: Box<FairError>,
    },

    #[error("malformed instance file: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FairError>;

pub(crate) fn invalid(msg: impl Into<String>) -> FairError {
    FairError::InvalidInput(msg.into())
}
