use thiserror::Error;

use crate::graph::snapshot::SnapshotError;
use crate::graph::GraphError;
use crate::ids::IdError;
use crate::model::{ConfigError, TimeError, VectorError};
use crate::pathways::ForestError;
use crate::stream::wire::ParseError;
use crate::streamgen::GenError;
use crate::trace::TraceError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-level error. Each module has its own error enum; this one wraps them
/// for callers that drive several modules at once (engine, CLI, FFI).
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Time(#[from] TimeError),
    #[error(transparent)]
    Vector(#[from] VectorError),
    #[error(transparent)]
    Id(#[from] IdError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid stream: {0}")]
    InvalidStream(String),
    #[error("sidecar state: {0}")]
    Sidecar(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
