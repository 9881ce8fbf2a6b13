use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("scheme error: {0}")]
    Scheme(String),

    #[error("{file}:{line}: malformed {kind} line: {msg}")]
    MalformedLine {
        file: String,
        line: usize,
        kind: char,
        msg: String,
    },

    #[error("{file}:{line}: unknown type name `{name}`")]
    UnknownType {
        file: String,
        line: usize,
        name: String,
    },

    #[error("{file}:{line}: unresolvable reference `{id}`")]
    UnresolvableReference {
        file: String,
        line: usize,
        id: String,
    },

    #[error("{file}:{line}: span {start}..{end} out of range (document length {len})")]
    OffsetOutOfRange {
        file: String,
        line: usize,
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("{file}:{line}: surface `{expected}` does not match text at {start}..{end} (`{actual}`)")]
    SurfaceMismatch {
        file: String,
        line: usize,
        start: usize,
        end: usize,
        expected: String,
        actual: String,
    },

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("entities overlap or fall outside the sequence: {0}")]
    TagEncoding(String),

    #[error("training error: {0}")]
    Train(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("generator config error: {0}")]
    Generator(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
