use thiserror::Error;

/// Errors raised across the assimilation engine and its laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument or geometry outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A state became non-finite while being evolved.
    #[error("overflow: non-finite state at step {step}")]
    Overflow { step: usize },

    /// A factorization or linear solve failed.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An iterative solver ran out of iterations.
    #[error("no convergence after {iterations} iterations (gradient norm {gradient_norm:e})")]
    Convergence {
        iterations: usize,
        gradient_norm: f64,
    },

    /// A cycle was asked for something its history cannot provide.
    #[error("state error: {0}")]
    State(String),

    /// A failure inside one assimilation cycle.
    #[error("cycle {cycle}: {source}")]
    Cycle {
        cycle: usize,
        #[source]
        source: Box<Error>,
    },

    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
