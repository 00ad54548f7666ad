use std::path::{Path, PathBuf};

/// Failures of the CLI and service, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: leafgraph_core::Error },

    #[error(transparent)]
    Core(#[from] leafgraph_core::Error),

    #[error("{0}")]
    Data(String),

    #[error("{0}")]
    Runtime(String),
}

pub type Result<T, E = AppError> = std::result::Result<T, E>;

impl AppError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn file(path: &Path, source: leafgraph_core::Error) -> Self {
        AppError::File {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 1 usage, 2 data or format, 3 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Io { .. } | AppError::Data(_) => 2,
            AppError::File { source, .. } | AppError::Core(source) => core_exit_code(source),
            AppError::Runtime(_) => 3,
        }
    }
}

fn core_exit_code(e: &leafgraph_core::Error) -> i32 {
    use leafgraph_core::Error::*;
    match e {
        Config(_) | Range(_) => 1,
        Format { .. } | UnsupportedVersion { .. } | Length { .. } | Shape { .. } | Dataset(_) | UnknownNode(_) => 2,
        Degenerate(_) | NonFinite { .. } | DenseCap { .. } | Divergence { .. } | Unsupported(_) => 3,
    }
}
