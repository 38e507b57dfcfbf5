use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = DeclipError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DeclipError {
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("remote encoder unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("text is empty after trimming")]
    EmptyText,
    #[error("image `{path}` could not be read: {reason}")]
    ImageUnreadable { path: PathBuf, reason: String },
    #[error("unsupported input for {backend} backend: {what}")]
    UnsupportedInput { backend: &'static str, what: String },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("vector has zero norm and cannot be normalized")]
    ZeroNorm,
    #[error("degenerate batch: need at least 2 items, got {0}")]
    DegenerateBatch(usize),
    #[error("dataset too small: {len} records for batch size {batch_size}")]
    DatasetTooSmall { len: usize, batch_size: usize },
    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        detail: String,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("duplicate image_ref `{0}`")]
    DuplicateImageRef(String),
    #[error("empty field `{0}`")]
    EmptyField(&'static str),
    #[error("malformed MLLM response: {reason}")]
    MalformedResponse { reason: String, raw: String },
    #[error("MLLM client unavailable: {0}")]
    ClientUnavailable(String),
    #[error("format version mismatch: expected {expected}, found `{found}`")]
    VersionMismatch { expected: String, found: String },
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid condition bundle: {0}")]
    InvalidCondition(String),
    #[error("invalid prompt pair: {0}")]
    InvalidPrompt(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DeclipError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DeclipError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors meaning "this item cannot be resolved", as opposed to
    /// a backend or data failure.
    pub fn is_missing_input(&self) -> bool {
        matches!(
            self,
            DeclipError::UnknownKey(_) | DeclipError::ImageUnreadable { .. }
        )
    }
}
