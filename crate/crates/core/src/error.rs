use thiserror::Error;

use cyto_autodiff::AutodiffError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("non-manifold mesh: {} edge(s) shared by more than two triangles, e.g. {:?}", .0.len(), &.0[..(.0.len().min(8))])]
    NonManifold(Vec<(u32, u32)>),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Coarse failure category, used for process exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Config,
            Error::Numeric(_) | Error::Autodiff(_) => ErrorCategory::Numeric,
            Error::Input(_) | Error::NonManifold(_) | Error::Io(_) | Error::Json(_) => ErrorCategory::Input,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Input,
    Numeric,
}
