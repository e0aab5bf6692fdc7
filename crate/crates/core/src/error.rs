use thiserror::Error;

use crate::varset::VarSet;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("graph contains a directed cycle through node {0}")]
    Cycle(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// The invariance-query budget ran out; `found` holds every set emitted before that.
    #[error("query budget of {budget} exhausted after emitting {} sets", found.len())]
    BudgetExceeded { budget: u64, found: Vec<VarSet> },

    #[error("numerical failure for set {set}: {reason}")]
    Numerical { set: VarSet, reason: String },

    #[error("graph sampler gave up after {0} rejected attempts")]
    Sampling(usize),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
