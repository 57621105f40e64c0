use thiserror::Error;

/// Errors produced by the core algorithms.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("matrix is not a rotation (orthonormality error {0:.3e})")]
    InvalidRotation(f64),

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("invalid camera model: {0}")]
    InvalidCamera(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("grid level {0} out of supported range 0..=3")]
    LevelOutOfRange(u32),

    #[error("slot capacity {0} exhausted")]
    CapacityExceeded(usize),

    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),

    #[error("surface depth {surface} must exceed near plane {near}")]
    InvalidDepth { surface: f64, near: f64 },

    #[error("voxel shape has no occupied voxel")]
    EmptyShape,

    #[error("ground truth contains no foreground pixels")]
    NoForeground,
}

pub type Result<T> = std::result::Result<T, CoreError>;
