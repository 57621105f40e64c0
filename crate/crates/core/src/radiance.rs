//! Multi-component density composition and voxelized shape extraction.
//!
//! Component densities are raw logits; the composed scene density is
//! `sigma_max * tanh(sum_k softplus(sigma_k))`, shared across components by
//! a softmax so that overlapping fields split rather than stack occupancy.

use crate::canonical_pose::{canonical_pose, CanonicalPoseResult};
use crate::error::{CoreError, Result};
use crate::geometry::{CameraModel, PointCloud, RigidPose, Rotation, Vec3};
use crate::icsbp::RandomTape;
use crate::so3_grid::RotationGrid;

pub fn softplus(x: f64) -> f64 {
    // Stable for large |x|.
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Composes per-component density logits into the scene density `sigma`
/// and the per-component shares `sigma_hat` (softmax split of `sigma`).
pub fn compose(logits: &[f64], sigma_max: f64) -> (f64, Vec<f64>) {
    assert!(sigma_max > 0.0, "sigma_max must be positive");
    let total: f64 = logits.iter().map(|&l| softplus(l)).sum();
    let sigma = sigma_max * total.tanh();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let denom: f64 = exps.iter().sum();
    let sigma_hat = exps.iter().map(|e| sigma * e / denom).collect();
    (sigma, sigma_hat)
}

/// Density-weighted colour mean: `(1 / sigma_max) * sum_k sigma_hat_k c_k`.
pub fn composed_colour(logits: &[f64], colours: &[Vec3], sigma_max: f64) -> Vec3 {
    assert_eq!(logits.len(), colours.len());
    let (_, sigma_hat) = compose(logits, sigma_max);
    let mut c = Vec3::zeros();
    for (w, col) in sigma_hat.iter().zip(colours) {
        c += col * (*w / sigma_max);
    }
    c
}

/// A radiance-field component: maps a world point and view direction to a
/// density logit and a colour in `[0, 1]^3`.
pub trait ComponentField {
    fn eval(&self, point: &Vec3, dir: &Vec3) -> (f64, Vec3);
}

/// Logit emitted inside analytic solids; `tanh(softplus(20))` is 1 to
/// machine precision.
pub const LOGIT_SOLID: f64 = 20.0;
/// Logit emitted in empty space.
pub const LOGIT_EMPTY: f64 = -20.0;

/// Solid sphere with uniform colour.
#[derive(Debug, Clone)]
pub struct AnalyticSphere {
    pub center: Vec3,
    pub radius: f64,
    pub colour: Vec3,
}

impl ComponentField for AnalyticSphere {
    fn eval(&self, point: &Vec3, _dir: &Vec3) -> (f64, Vec3) {
        let logit = if (point - self.center).norm() <= self.radius {
            LOGIT_SOLID
        } else {
            LOGIT_EMPTY
        };
        (logit, self.colour)
    }
}

/// Solid oriented box with uniform colour.
#[derive(Debug, Clone)]
pub struct AnalyticBox {
    pub center: Vec3,
    pub rotation: Rotation,
    pub half_extents: Vec3,
    pub colour: Vec3,
}

impl ComponentField for AnalyticBox {
    fn eval(&self, point: &Vec3, _dir: &Vec3) -> (f64, Vec3) {
        let local = self.rotation.inverse().apply(&(point - self.center));
        let inside = local.x.abs() <= self.half_extents.x
            && local.y.abs() <= self.half_extents.y
            && local.z.abs() <= self.half_extents.z;
        (if inside { LOGIT_SOLID } else { LOGIT_EMPTY }, self.colour)
    }
}

/// Solid half-space `z <= z_ground` (table/ground component).
#[derive(Debug, Clone)]
pub struct HalfSpace {
    pub z_ground: f64,
    pub colour: Vec3,
}

impl ComponentField for HalfSpace {
    fn eval(&self, point: &Vec3, _dir: &Vec3) -> (f64, Vec3) {
        let logit = if point.z <= self.z_ground {
            LOGIT_SOLID
        } else {
            LOGIT_EMPTY
        };
        (logit, self.colour)
    }
}

/// Spatially constant field, mostly for tests.
#[derive(Debug, Clone)]
pub struct ConstantField {
    pub logit: f64,
    pub colour: Vec3,
}

impl ComponentField for ConstantField {
    fn eval(&self, _point: &Vec3, _dir: &Vec3) -> (f64, Vec3) {
        (self.logit, self.colour)
    }
}

/// Tabulated logits on the canonical voxel grid of a pose; nearest-cell
/// lookup, empty outside the box.
#[derive(Debug, Clone)]
pub struct VoxelField {
    pub pose: RigidPose,
    pub dim: usize,
    /// Row-major `dim^3` logits indexed as `x + dim * (y + dim * z)`.
    pub logits: Vec<f64>,
    pub colour: Vec3,
}

impl ComponentField for VoxelField {
    fn eval(&self, point: &Vec3, _dir: &Vec3) -> (f64, Vec3) {
        let c = self.pose.world_to_canonical(point);
        if c.x.abs() > 1.0 || c.y.abs() > 1.0 || c.z.abs() > 1.0 {
            return (LOGIT_EMPTY, self.colour);
        }
        let n = self.dim as f64;
        let cell = |v: f64| (((v + 1.0) / 2.0 * n) as usize).min(self.dim - 1);
        let (ix, iy, iz) = (cell(c.x), cell(c.y), cell(c.z));
        (self.logits[ix + self.dim * (iy + self.dim * iz)], self.colour)
    }
}

/// Evaluation of a composed multi-component field at one query.
#[derive(Debug, Clone)]
pub struct ComposedSample {
    pub sigma: f64,
    pub sigma_hat: Vec<f64>,
    pub logits: Vec<f64>,
    pub colours: Vec<Vec3>,
    pub colour: Vec3,
}

/// A set of component fields composed under a shared density budget.
pub struct ComposedField {
    pub components: Vec<Box<dyn ComponentField + Send + Sync>>,
    pub sigma_max: f64,
}

impl ComposedField {
    pub fn eval(&self, point: &Vec3, dir: &Vec3) -> ComposedSample {
        let mut logits = Vec::with_capacity(self.components.len());
        let mut colours = Vec::with_capacity(self.components.len());
        for comp in &self.components {
            let (l, c) = comp.eval(point, dir);
            logits.push(l);
            colours.push(c);
        }
        let (sigma, sigma_hat) = compose(&logits, self.sigma_max);
        let colour = composed_colour(&logits, &colours, self.sigma_max);
        ComposedSample {
            sigma,
            sigma_hat,
            logits,
            colours,
            colour,
        }
    }
}

/// Thresholded occupancy of a field on the `S^3` canonical cell centres of
/// a pose's bounding box.
#[derive(Debug, Clone)]
pub struct VoxelShape {
    pub dim: usize,
    /// Row-major occupancy indexed as `x + dim * (y + dim * z)`.
    pub occupancy: Vec<bool>,
    pub threshold: f64,
}

impl VoxelShape {
    /// Canonical coordinate of cell centre `(ix, iy, iz)`, in `(-1, 1)`.
    pub fn centre(&self, ix: usize, iy: usize, iz: usize) -> Vec3 {
        let n = self.dim as f64;
        Vec3::new(
            (2.0 * ix as f64 + 1.0) / n - 1.0,
            (2.0 * iy as f64 + 1.0) / n - 1.0,
            (2.0 * iz as f64 + 1.0) / n - 1.0,
        )
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Canonical centres of all occupied cells, in index order.
    pub fn occupied_centres(&self) -> Vec<Vec3> {
        let mut out = Vec::new();
        for iz in 0..self.dim {
            for iy in 0..self.dim {
                for ix in 0..self.dim {
                    if self.occupancy[ix + self.dim * (iy + self.dim * iz)] {
                        out.push(self.centre(ix, iy, iz));
                    }
                }
            }
        }
        out
    }

    /// Occupied centres mapped into world coordinates through `pose`.
    pub fn occupied_world(&self, pose: &RigidPose) -> Vec<Vec3> {
        self.occupied_centres()
            .iter()
            .map(|c| pose.canonical_to_world(c))
            .collect()
    }
}

/// Evaluates `field` at every canonical cell centre of `pose` and marks a
/// voxel occupied when `tanh(softplus(logit))` strictly exceeds `sigma_t`.
pub fn voxel_occupancy(
    field: &dyn ComponentField,
    pose: &RigidPose,
    dim: usize,
    sigma_t: f64,
) -> VoxelShape {
    assert!(dim >= 2, "need at least 2 voxels per dimension");
    let mut shape = VoxelShape {
        dim,
        occupancy: vec![false; dim * dim * dim],
        threshold: sigma_t,
    };
    let dir = Vec3::z();
    for iz in 0..dim {
        for iy in 0..dim {
            for ix in 0..dim {
                let world = pose.canonical_to_world(&shape.centre(ix, iy, iz));
                let (logit, _) = field.eval(&world, &dir);
                shape.occupancy[ix + dim * (iy + dim * iz)] =
                    softplus(logit).tanh() > sigma_t;
            }
        }
    }
    shape
}

/// Recovers the shape-based pose from a voxelized occupancy by running the
/// minimum-volume search over the occupied centres in world coordinates.
pub fn shape_pose_from_voxels(
    shape: &VoxelShape,
    world_pose: &RigidPose,
    grid: &RotationGrid,
    beta: f64,
) -> Result<CanonicalPoseResult> {
    let points = shape.occupied_world(world_pose);
    if points.is_empty() {
        return Err(CoreError::EmptyShape);
    }
    canonical_pose(
        &PointCloud::from_points(points),
        grid,
        beta,
        world_pose.box_size,
    )
}

/// The two-evaluation ray sample: a surface point jittered into the
/// thickness band and an air point between the near plane and the surface.
#[derive(Debug, Clone)]
pub struct RaySample {
    pub surface: Vec3,
    pub air: Vec3,
    /// Per-unit-depth density of the uniform air draw.
    pub rho_air: f64,
}

/// Samples the surface/air evaluation points for pixel `(u, v)`.
pub fn sample_ray_points(
    cam: &CameraModel,
    pixel: (f64, f64),
    d_surface: f64,
    delta: f64,
    near: f64,
    tape: &mut RandomTape,
) -> Result<RaySample> {
    if d_surface <= near {
        return Err(CoreError::InvalidDepth {
            surface: d_surface,
            near,
        });
    }
    assert!(delta > 0.0, "surface thickness must be positive");
    let d_s = d_surface + tape.next_uniform() * delta;
    let d_a = near + tape.next_uniform() * (d_surface - near);
    let at_depth = |d: f64| {
        let p_cam = cam.unproject_pixel(pixel.0, pixel.1, d);
        cam.camera_to_world(&p_cam)
    };
    Ok(RaySample {
        surface: at_depth(d_s),
        air: at_depth(d_a),
        rho_air: 1.0 / (d_surface - near),
    })
}
