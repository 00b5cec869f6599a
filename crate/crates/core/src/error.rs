use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: invalid record: {message}")]
    Validation {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("cannot load image {path}: {message}")]
    Image { path: PathBuf, message: String },

    /// A bounding box that does not overlap its source image at all.
    #[error("record {record}: bounding box lies outside the {width}x{height} image")]
    BoxOutsideImage {
        record: usize,
        width: u32,
        height: u32,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("feature dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("missing crop id `{0}`")]
    MissingCrop(String),

    #[error("embedding file {path}: {message}")]
    EmbeddingFormat { path: PathBuf, message: String },

    #[error("inference model: {0}")]
    Model(String),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error("unknown model kind tag `{0}`")]
    UnknownModelKind(String),

    #[error("SVR solver did not converge after {iterations} updates (duality gap {gap:e})")]
    NoConvergence { iterations: usize, gap: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_computational(&self) -> bool {
        matches!(
            self.root(),
            Error::NoConvergence { .. } | Error::Numerical(_) | Error::Model(_)
        )
    }
}
