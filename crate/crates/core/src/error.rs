use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("inconsistent payload: {0}")]
    InconsistentPayload(String),
    #[error("empty level: {0}")]
    EmptyLevel(String),
    #[error("corrupt level: {0}")]
    CorruptLevel(String),
    #[error("depth mismatch: {0}")]
    DepthMismatch(String),
    #[error("corrupt pyramid: {0}")]
    CorruptPyramid(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("optimizer state: {0}")]
    State(String),
    #[error("invalid probability row: {0}")]
    InvalidProbability(String),
    #[error("corrupt stream: {0}")]
    CorruptStream(String),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("hash mismatch: stream {found:#018x}, decoder {expected:#018x}{}", field.as_ref().map(|f| format!(" (differs in `{f}`)")).unwrap_or_default())]
    HashMismatch {
        expected: u64,
        found: u64,
        field: Option<String>,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: usize, loss: f64 },
    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Wraps the error with the index of the frame it occurred in.
    pub fn in_frame(self, frame: usize) -> Self {
        Error::Frame {
            frame,
            source: Box::new(self),
        }
    }

    /// Wraps the error with the file it occurred in.
    pub fn in_file(self, path: &std::path::Path) -> Self {
        Error::File {
            path: path.display().to_string(),
            source: Box::new(self),
        }
    }

    /// The innermost error, unwrapping frame and file context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Frame { source, .. } | Error::File { source, .. } => source.root(),
            e => e,
        }
    }
}
