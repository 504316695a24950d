use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("negative weight {value} at class {class}")]
    NegativeWeight { class: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty candidate label set")]
    EmptyLabelSet,

    #[error("class index {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },

    #[error("unsupported class count {0}")]
    UnsupportedClassCount(usize),

    #[error("loss {0} does not support this operation")]
    UnsupportedLoss(&'static str),

    #[error("invalid generation model: {0}")]
    InvalidGeneration(String),

    #[error("rejection sampling exceeded {0} retries; model is degenerate")]
    RetryCapExceeded(usize),

    #[error("preconditions not met: {0}")]
    Inapplicable(String),

    #[error("true label {label} not in candidate set at row {row}")]
    LabelNotInCandidates { row: usize, label: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr = {lr})")]
    NonFiniteLoss { epoch: usize, batch: usize, lr: f64 },

    #[error("malformed {format} input: {msg}")]
    Format { format: &'static str, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(format: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            format,
            msg: msg.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
