//! Algorithmic core for object-centric RGB-D scene decomposition.
//!
//! The crate covers the non-neural machinery of the pipeline:
//!
//! - [`geometry`] – rotations, rigid poses, AABBs, point clouds and
//!   RGB-D backprojection.
//! - [`so3_grid`] – deterministic equivolumetric rotation grids built from
//!   HEALPix sphere pixels through the Hopf fibration.
//! - [`canonical_pose`] – shape-based canonical pose recovery by exhaustive
//!   minimum-volume search over a rotation grid.
//! - [`icsbp`] – instance-colouring stick-breaking process producing soft
//!   attention masks, with seed propagation across video frames.
//! - [`radiance`] – multi-component density composition, analytic test
//!   fields, voxelized shape extraction and depth-aware ray sampling.
//! - [`losses`] – the training objective terms as pure functions.
//! - [`metrics`] – foreground ARI, foreground MSC and background mIoU.

pub mod canonical_pose;
pub mod error;
pub mod geometry;
pub mod icsbp;
pub mod losses;
pub mod metrics;
pub mod radiance;
pub mod so3_grid;

pub use error::CoreError;
pub use geometry::{Aabb, CameraModel, PointCloud, RigidPose, Rotation, Vec3};
pub use so3_grid::RotationGrid;
