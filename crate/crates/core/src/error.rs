use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The ELF structure is invalid at `offset`.
    #[error("malformed ELF at offset {offset:#x}: {reason}")]
    ElfParse { offset: u64, reason: String },

    /// A table or section points past the end of the file.
    #[error("truncated ELF: {what} at offset {offset:#x} (+{size} bytes) extends past end of file ({len} bytes)")]
    ElfTruncated {
        what: String,
        offset: u64,
        size: u64,
        len: u64,
    },

    #[error("validation failed at `{path}`: {reason}")]
    Validation { path: String, reason: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate embedding for function `{0}`: graph vector has zero norm")]
    DegenerateEmbedding(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unit `{0}` is already indexed")]
    Conflict(String),

    #[error("cannot parse version `{0}`")]
    VersionParse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
