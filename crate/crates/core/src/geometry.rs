//! Elementary 3D types and transforms.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use ndarray::{Array2, Array3};

use crate::error::{CoreError, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Orthonormality tolerance for accepting a matrix as a rotation outright.
pub const ROTATION_TOL: f64 = 1e-6;
/// Matrices within this tolerance of orthonormal are re-orthonormalized;
/// anything worse is rejected.
pub const ROTATION_REPAIR_TOL: f64 = 1e-3;
/// Floor applied to each AABB extent before computing a volume, so that
/// planar and collinear clouds rank by their nonzero extents.
pub const EPS_EXTENT: f64 = 1e-6;

/// A proper rotation: orthonormal 3x3 matrix with determinant +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    /// Builds a rotation from a raw matrix, re-orthonormalizing inputs that
    /// are within `ROTATION_REPAIR_TOL` of orthonormal.
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        let err = orthonormality_error(&m);
        if err <= ROTATION_TOL && (m.determinant() - 1.0).abs() <= ROTATION_TOL {
            return Ok(Rotation(m));
        }
        if err <= ROTATION_REPAIR_TOL {
            let svd = m.svd(true, true);
            let u = svd.u.expect("svd with u");
            let v_t = svd.v_t.expect("svd with v_t");
            let mut r = u * v_t;
            if r.determinant() < 0.0 {
                // Flip the singular direction with the smallest singular value.
                let mut u2 = u;
                u2.set_column(2, &(-u.column(2)));
                r = u2 * v_t;
            }
            return Ok(Rotation(r));
        }
        Err(CoreError::InvalidRotation(err))
    }

    /// Builds a rotation from a (not necessarily unit) quaternion `(w, x, y, z)`.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Self {
        let q = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
        Rotation(*q.to_rotation_matrix().matrix())
    }

    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    pub fn rot_x(angle: f64) -> Self {
        Rotation(*nalgebra::Rotation3::from_axis_angle(&Vector3::x_axis(), angle).matrix())
    }

    pub fn rot_y(angle: f64) -> Self {
        Rotation(*nalgebra::Rotation3::from_axis_angle(&Vector3::y_axis(), angle).matrix())
    }

    pub fn rot_z(angle: f64) -> Self {
        Rotation(*nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), angle).matrix())
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    /// The inverse rotation (transpose).
    pub fn inverse(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }
}

fn orthonormality_error(m: &Mat3) -> f64 {
    let gram = m.transpose() * m;
    let mut err: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let target = if i == j { 1.0 } else { 0.0 };
            err = err.max((gram[(i, j)] - target).abs());
        }
    }
    err
}

/// Geodesic distance on SO(3): `arccos((tr(a^T b) - 1) / 2)`, in `[0, pi]`.
pub fn geodesic_distance(a: &Rotation, b: &Rotation) -> f64 {
    let tr = (a.matrix().transpose() * b.matrix()).trace();
    ((tr - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

/// Rigid pose of an object box: translation, rotation, box size, plus an
/// optional translation correction `delta_t` bounded by `t_max` per axis.
#[derive(Debug, Clone, Copy)]
pub struct RigidPose {
    pub translation: Vec3,
    pub rotation: Rotation,
    /// Positive edge length of the canonical bounding box, in metres.
    pub box_size: f64,
    pub delta_t: Vec3,
}

impl RigidPose {
    pub fn new(translation: Vec3, rotation: Rotation, box_size: f64) -> Result<Self> {
        if !(box_size > 0.0) {
            return Err(CoreError::InvalidPose(format!(
                "box size must be positive, got {box_size}"
            )));
        }
        Ok(RigidPose {
            translation,
            rotation,
            box_size,
            delta_t: Vec3::zeros(),
        })
    }

    /// Attaches a translation correction, enforcing `|delta_t_i| <= t_max`.
    pub fn with_delta_t(mut self, delta_t: Vec3, t_max: f64) -> Result<Self> {
        for i in 0..3 {
            if delta_t[i].abs() > t_max {
                return Err(CoreError::InvalidPose(format!(
                    "delta_t[{i}] = {} exceeds t_max = {t_max}",
                    delta_t[i]
                )));
            }
        }
        self.delta_t = delta_t;
        Ok(self)
    }

    /// Translation with the correction applied.
    pub fn effective_translation(&self) -> Vec3 {
        self.translation + self.delta_t
    }

    /// Maps a canonical coordinate in `[-1, 1]^3` to world coordinates.
    pub fn canonical_to_world(&self, canonical: &Vec3) -> Vec3 {
        self.effective_translation() + self.rotation.apply(canonical) * (self.box_size / 2.0)
    }

    /// Maps a world coordinate to canonical coordinates.
    pub fn world_to_canonical(&self, world: &Vec3) -> Vec3 {
        self.rotation.inverse().apply(&(world - self.effective_translation())) * (2.0 / self.box_size)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy)]
pub struct Aabb {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Aabb {
    pub fn extents(&self) -> Vec3 {
        self.hi - self.lo
    }

    /// Volume with each extent floored at `EPS_EXTENT`.
    pub fn volume(&self) -> f64 {
        let e = self.extents();
        e.x.max(EPS_EXTENT) * e.y.max(EPS_EXTENT) * e.z.max(EPS_EXTENT)
    }
}

/// Componentwise min/max box of a non-empty point set.
pub fn aabb_of(points: &[Vec3]) -> Result<Aabb> {
    if points.is_empty() {
        return Err(CoreError::EmptyCloud);
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in &points[1..] {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    Ok(Aabb { lo, hi })
}

/// A point set with optional per-point colours and features.
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub colours: Option<Vec<Vec3>>,
    pub features: Option<Vec<Vec<f64>>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Vec3>) -> Self {
        PointCloud {
            points,
            colours: None,
            features: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Arithmetic mean of the points.
    pub fn centroid(&self) -> Result<Vec3> {
        if self.points.is_empty() {
            return Err(CoreError::EmptyCloud);
        }
        let sum: Vec3 = self.points.iter().sum();
        Ok(sum / self.points.len() as f64)
    }

    /// Largest distance from the centroid to any point.
    pub fn radius(&self) -> Result<f64> {
        let c = self.centroid()?;
        Ok(self
            .points
            .iter()
            .map(|p| (p - c).norm())
            .fold(0.0, f64::max))
    }
}

/// Maps points into the canonical frame of `pose` and discards everything
/// outside `[-1, 1]^3`. Colours and features of surviving points are kept
/// in order.
pub fn canonical_transform(pc: &PointCloud, pose: &RigidPose) -> PointCloud {
    let mut out = PointCloud::default();
    let mut colours = Vec::new();
    let mut features = Vec::new();
    for (i, p) in pc.points.iter().enumerate() {
        let c = pose.world_to_canonical(p);
        if c.x.abs() <= 1.0 && c.y.abs() <= 1.0 && c.z.abs() <= 1.0 {
            out.points.push(c);
            if let Some(cols) = &pc.colours {
                colours.push(cols[i]);
            }
            if let Some(feats) = &pc.features {
                features.push(feats[i].clone());
            }
        }
    }
    if pc.colours.is_some() {
        out.colours = Some(colours);
    }
    if pc.features.is_some() {
        out.features = Some(features);
    }
    out
}

/// Pinhole camera with a camera-to-world extrinsic pose.
#[derive(Debug, Clone)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub extrinsic: RigidPose,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        extrinsic: RigidPose,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(CoreError::InvalidCamera(format!(
                "focal lengths must be positive, got ({fx}, {fy})"
            )));
        }
        if !(0.0 <= cx && cx < width as f64) || !(0.0 <= cy && cy < height as f64) {
            return Err(CoreError::InvalidCamera(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(CameraModel {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            extrinsic,
        })
    }

    /// Camera-frame point for pixel `(u, v)` at z-depth `d`.
    pub fn unproject_pixel(&self, u: f64, v: f64, d: f64) -> Vec3 {
        Vec3::new(
            (u - self.cx) * d / self.fx,
            (v - self.cy) * d / self.fy,
            d,
        )
    }

    pub fn camera_to_world(&self, p_cam: &Vec3) -> Vec3 {
        self.extrinsic.effective_translation() + self.extrinsic.rotation.apply(p_cam)
    }

    /// Projects a world point to `(u, v, depth)`; `None` behind the camera.
    pub fn project(&self, world: &Vec3) -> Option<(f64, f64, f64)> {
        let p = self
            .extrinsic
            .rotation
            .inverse()
            .apply(&(world - self.extrinsic.effective_translation()));
        if p.z <= 0.0 {
            return None;
        }
        Some((
            self.cx + self.fx * p.x / p.z,
            self.cy + self.fy * p.y / p.z,
            p.z,
        ))
    }
}

/// Backprojects a depth map into a world-frame point cloud. Depth 0 marks an
/// invalid pixel and is omitted. Also returns the pixel index `(row, col)`
/// of every surviving point.
pub fn backproject_indexed(
    depth: &Array2<f64>,
    rgb: Option<&Array3<f64>>,
    cam: &CameraModel,
) -> Result<(PointCloud, Vec<(usize, usize)>)> {
    let (h, w) = depth.dim();
    if h != cam.height || w != cam.width {
        return Err(CoreError::ShapeMismatch(format!(
            "depth is {h}x{w}, camera expects {}x{}",
            cam.height, cam.width
        )));
    }
    if let Some(rgb) = rgb {
        let (rh, rw, rc) = rgb.dim();
        if rh != h || rw != w || rc != 3 {
            return Err(CoreError::ShapeMismatch(format!(
                "rgb is {rh}x{rw}x{rc}, expected {h}x{w}x3"
            )));
        }
    }
    let mut pc = PointCloud::default();
    let mut pixels = Vec::new();
    let mut colours = Vec::new();
    for v in 0..h {
        for u in 0..w {
            let d = depth[(v, u)];
            if d <= 0.0 {
                continue;
            }
            let p_cam = cam.unproject_pixel(u as f64, v as f64, d);
            pc.points.push(cam.camera_to_world(&p_cam));
            pixels.push((v, u));
            if let Some(rgb) = rgb {
                colours.push(Vec3::new(rgb[(v, u, 0)], rgb[(v, u, 1)], rgb[(v, u, 2)]));
            }
        }
    }
    if rgb.is_some() {
        pc.colours = Some(colours);
    }
    Ok((pc, pixels))
}

/// Backprojects a depth map (with per-pixel colours) into a point cloud.
pub fn backproject(
    depth: &Array2<f64>,
    rgb: &Array3<f64>,
    cam: &CameraModel,
) -> Result<PointCloud> {
    Ok(backproject_indexed(depth, Some(rgb), cam)?.0)
}
