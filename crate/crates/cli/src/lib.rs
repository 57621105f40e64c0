//! File formats, synthetic scenes, and the end-to-end decomposition
//! pipeline around `canopy-core`.
//!
//! - [`tensor`]: the binary tensor file format used for frames and masks.
//! - [`manifest`]: the scene manifest (cameras, primitives, hyperparameters).
//! - [`scene`]: analytic scene fields and the ray-march renderer.
//! - [`pipeline`]: per-frame decompose / pose / loss / metric pipeline.
//! - [`report`]: aggregation of scores across scenes.

pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod scene;
pub mod tensor;

pub use error::{CliError, Result};
