use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = DvrpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DvrpError {
    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid edit: {0}")]
    InvalidEdit(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("instance of {size} tasks exceeds the exhaustive limit of {limit}")]
    SizeLimit { size: usize, limit: usize },

    #[error("plan was not produced by the exhaustive solver")]
    NotExact,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("seeding error: {0}")]
    Seeding(String),

    #[error("failed to ingest {path}: {reason}")]
    Ingestion { path: PathBuf, reason: String },
}

impl DvrpError {
    pub(crate) fn ingestion(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        DvrpError::Ingestion {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
