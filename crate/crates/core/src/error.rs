use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid unit vector: {0}")]
    InvalidVector(&'static str),

    #[error("invalid constellation parameters: {0}")]
    InvalidParams(String),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("unknown node {0}")]
    UnknownNode(usize),

    #[error("no link {0}-{1} in topology")]
    UnknownLink(usize, usize),

    #[error("view inconsistent with topology at node {node}: {detail}")]
    ViewInconsistent { node: usize, detail: String },

    #[error("malformed link state update from {origin}: {detail}")]
    MalformedLsu { origin: usize, detail: String },

    #[error("no orbital state for node {0}")]
    MissingOrbit(u64),

    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),

    #[error("nothing to write")]
    EmptyRows,

    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
