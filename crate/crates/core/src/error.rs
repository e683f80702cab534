use std::path::PathBuf;

use crate::graph::Edge;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate edge ({}, {})", .0.client, .0.server)]
    DuplicateEdge(Edge),

    #[error("client {client} has weight {weight}; weights must be at least 1")]
    InvalidWeight { client: usize, weight: u64 },

    #[error("edge ({}, {}) is not part of the graph", .0.client, .0.server)]
    UnknownEdge(Edge),

    #[error("client {client} has no incident edge; no assignment exists")]
    Infeasible { client: usize },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("all client values are zero")]
    DegenerateValues,

    #[error("instance too large for enumeration: {assignments} assignments exceed the limit of {limit}")]
    TooLarge { assignments: f64, limit: u64 },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by bad input rather than a broken guarantee.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Invariant(_))
    }
}
