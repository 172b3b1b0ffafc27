use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at layer {layer} ({kind}): expected {expected}, got {actual:?}")]
    ShapeMismatch {
        layer: usize,
        kind: &'static str,
        expected: String,
        actual: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("backward called with an unusable cache: {0}")]
    StaleCache(&'static str),

    #[error("magnitude {magnitude} out of range [{min}, {max}] for {op}")]
    MagnitudeOutOfRange {
        op: &'static str,
        magnitude: f32,
        min: f32,
        max: f32,
    },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("dataset must contain both classes (real: {real}, fake: {fake})")]
    SingleClass { real: usize, fake: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: u64, msg: String },

    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
