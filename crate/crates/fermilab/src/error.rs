use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("unsupported potential: {0}")]
    UnsupportedPotential(String),
    #[error("unsupported observable: {0}")]
    UnsupportedObservable(String),
    #[error("arity error: {0}")]
    Arity(String),
    #[error("Pauli bound violated: {0}")]
    PauliBound(String),
    #[error("step-size error: {0}")]
    StepSize(String),
    #[error("capacity error: {0}")]
    Capacity(String),
    #[error("memory guard: {0}")]
    MemoryGuard(String),
    #[error("stencil error: {0}")]
    Stencil(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("bound inapplicable: {0}")]
    BoundInapplicable(String),
    #[error("window error: {0}")]
    Window(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid config field `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
