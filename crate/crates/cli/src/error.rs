use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad tensor file {path}: {reason}")]
    BadTensor { path: PathBuf, reason: String },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("could not place primitives without overlap after {0} attempts")]
    OverlapRejected(usize),
    #[error("frame {frame}, slot {slot}: {source}")]
    SlotContext {
        frame: usize,
        slot: usize,
        source: canopy_core::CoreError,
    },
    #[error(transparent)]
    Core(#[from] canopy_core::CoreError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs rather than failures at run
    /// time; the CLI maps these to exit code 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            CliError::BadTensor { .. }
                | CliError::InvalidManifest(_)
                | CliError::OverlapRejected(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
