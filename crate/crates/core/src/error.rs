use thiserror::Error;

use crate::forecaster::TrainHistory;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("normalizer error: {0}")]
    Normalizer(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    TrainingDiverged {
        epoch: usize,
        reason: String,
        /// Per-epoch losses recorded up to the point of divergence.
        history: Box<TrainHistory>,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
