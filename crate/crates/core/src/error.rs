use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape for {op}: {detail}")]
    InvalidShape { op: &'static str, detail: String },
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("variable does not belong to this tape")]
    ForeignVar,
    #[error("tape was created without gradient recording")]
    NotRecording,
    #[error("timestep {t} outside 1..={max}")]
    TimestepOutOfRange { t: usize, max: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite training loss at step {0}")]
    NonFiniteLoss(usize),
    #[error("sampler state became non-finite at timestep {0}")]
    NonFiniteState(usize),
    #[error("degenerate landmark configuration: {0}")]
    DegenerateLandmarks(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn invalid_shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidShape {
            op,
            detail: detail.into(),
        }
    }
}
