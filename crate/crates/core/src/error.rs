use thiserror::Error;

use crate::diff::DiffError;
use crate::mesh::MeshError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Attack(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("batch normalization in training mode needs at least 2 rows, got {0}")]
    BatchTooSmall(usize),
    #[error("value is not finite: {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
