//! Shape-based canonical pose recovery via the minimum volume principle.
//!
//! For every rotation in an equivolumetric grid the points are transformed
//! into that orientation and the volume of their axis-aligned bounding box
//! is computed. Among all rotations whose volume lies within a `(1 + beta)`
//! band of the minimum, the one geodesically closest to the world frame is
//! chosen (ties broken by lowest grid index).

use crate::error::{CoreError, Result};
use crate::geometry::{geodesic_distance, PointCloud, RigidPose, Rotation, Vec3, EPS_EXTENT};
use crate::so3_grid::RotationGrid;

/// Outcome of the minimum-volume search.
#[derive(Debug, Clone)]
pub struct CanonicalPoseResult {
    pub pose: RigidPose,
    /// Smallest AABB volume over all grid rotations.
    pub min_volume: f64,
    /// Number of rotations whose volume lies in `[V_min, (1+beta) V_min]`.
    pub candidate_count: usize,
    /// Geodesic distance of the chosen rotation to the world frame.
    pub chosen_distance: f64,
    /// Index of the chosen rotation in the grid.
    pub chosen_index: usize,
    /// Set when all input points coincide; the returned pose is then
    /// arbitrary in orientation.
    pub degenerate: bool,
}

/// AABB volume of the points transformed by the inverse of `rot`, with the
/// extent floor applied. Translation cannot change the volume, so the points
/// are used as-is.
fn rotated_aabb_volume(points: &[Vec3], rot: &Rotation) -> f64 {
    let rt = rot.matrix().transpose();
    let mut lo = rt * points[0];
    let mut hi = lo;
    for p in &points[1..] {
        let q = rt * p;
        lo = lo.inf(&q);
        hi = hi.sup(&q);
    }
    let e = hi - lo;
    e.x.max(EPS_EXTENT) * e.y.max(EPS_EXTENT) * e.z.max(EPS_EXTENT)
}

/// Recovers the canonical pose of `pc` over `grid` with tolerance band
/// `beta` and canonical box size `box_size`.
pub fn canonical_pose(
    pc: &PointCloud,
    grid: &RotationGrid,
    beta: f64,
    box_size: f64,
) -> Result<CanonicalPoseResult> {
    if pc.is_empty() {
        return Err(CoreError::EmptyCloud);
    }
    let centroid = pc.centroid()?;
    let degenerate = pc.points.iter().all(|p| *p == pc.points[0]);

    let volumes: Vec<f64> = grid
        .rotations()
        .iter()
        .map(|r| rotated_aabb_volume(&pc.points, r))
        .collect();
    let min_volume = volumes.iter().cloned().fold(f64::INFINITY, f64::min);
    // The band is inclusive at V_min, so the argmin is always a candidate.
    let band = (1.0 + beta) * min_volume;

    let identity = Rotation::identity();
    let mut chosen_index = usize::MAX;
    let mut chosen_distance = f64::INFINITY;
    let mut candidate_count = 0usize;
    for (i, (rot, &vol)) in grid.rotations().iter().zip(&volumes).enumerate() {
        if vol >= min_volume && vol <= band {
            candidate_count += 1;
            let d = geodesic_distance(rot, &identity);
            if d < chosen_distance {
                chosen_distance = d;
                chosen_index = i;
            }
        }
    }

    let pose = RigidPose::new(centroid, grid.rotations()[chosen_index], box_size)?;
    Ok(CanonicalPoseResult {
        pose,
        min_volume,
        candidate_count,
        chosen_distance,
        chosen_index,
        degenerate,
    })
}

/// The 24 rotational symmetries of the cube: all signed permutation
/// matrices with determinant +1.
pub fn cube_rotation_group() -> Vec<Rotation> {
    let mut group = Vec::with_capacity(24);
    let perms = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    for perm in perms {
        for signs in 0..8u8 {
            let mut m = nalgebra::Matrix3::<f64>::zeros();
            for (row, &col) in perm.iter().enumerate() {
                let sign = if signs & (1 << row) != 0 { -1.0 } else { 1.0 };
                m[(row, col)] = sign;
            }
            if (m.determinant() - 1.0).abs() < 1e-9 {
                group.push(Rotation::from_matrix(m).expect("signed permutation"));
            }
        }
    }
    debug_assert_eq!(group.len(), 24);
    group
}

/// Rotation error between an estimate and the truth, minimized over a
/// symmetry group applied on the right of the truth.
pub fn symmetry_aware_rotation_error(
    estimate: &Rotation,
    truth: &Rotation,
    symmetry_group: &[Rotation],
) -> f64 {
    assert!(!symmetry_group.is_empty(), "symmetry group must be nonempty");
    symmetry_group
        .iter()
        .map(|g| geodesic_distance(estimate, &truth.compose(g)))
        .fold(f64::INFINITY, f64::min)
}
