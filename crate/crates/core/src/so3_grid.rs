//! Deterministic equivolumetric rotation grids on SO(3).
//!
//! The construction crosses HEALPix ring-scheme pixel centres on the
//! 2-sphere with a uniform circle grid and maps each pair through the Hopf
//! fibration to a unit quaternion. Level `l` yields `72 * 8^l` rotations.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use crate::error::{CoreError, Result};
use crate::geometry::Rotation;

/// Highest supported subdivision level (memory guard).
pub const MAX_LEVEL: u32 = 3;

/// A deterministic equivolumetric set of rotations.
#[derive(Debug, Clone)]
pub struct RotationGrid {
    level: u32,
    rotations: Vec<Rotation>,
    quats: Vec<[f64; 4]>,
}

impl RotationGrid {
    /// Wraps an explicit rotation list (for cached grids or custom search
    /// sets). The quaternions are recovered from the matrices.
    pub fn from_rotations(level: u32, rotations: Vec<Rotation>) -> Self {
        let quats = rotations
            .iter()
            .map(|r| {
                let q = nalgebra::UnitQuaternion::from_rotation_matrix(
                    &nalgebra::Rotation3::from_matrix_unchecked(*r.matrix()),
                );
                canonicalize([q.w, q.i, q.j, q.k])
            })
            .collect();
        RotationGrid {
            level,
            rotations,
            quats,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }

    pub fn rotations(&self) -> &[Rotation] {
        &self.rotations
    }

    /// Unit quaternions `(w, x, y, z)` with nonnegative scalar part, matching
    /// `rotations()` by index.
    pub fn quaternions(&self) -> &[[f64; 4]] {
        &self.quats
    }
}

/// HEALPix ring-scheme pixel centres for the given `nside`, as
/// `(theta, phi)` colatitude/longitude pairs ordered north to south.
fn healpix_ring_centres(nside: u32) -> Vec<(f64, f64)> {
    let n = nside as i64;
    let mut out = Vec::with_capacity((12 * n * n) as usize);
    // North polar cap rings.
    for i in 1..n {
        let z = 1.0 - (i * i) as f64 / (3.0 * (n * n) as f64);
        let step = PI / (2.0 * i as f64);
        for j in 0..4 * i {
            out.push((z.acos(), (j as f64 + 0.5) * step));
        }
    }
    // Equatorial belt rings, alternating half-step phase.
    for i in n..=3 * n {
        let z = 4.0 / 3.0 - 2.0 * i as f64 / (3.0 * n as f64);
        let offset = if (i - n) % 2 == 0 { 0.5 } else { 0.0 };
        let step = PI / (2.0 * n as f64);
        for j in 0..4 * n {
            out.push((z.clamp(-1.0, 1.0).acos(), (j as f64 + offset) * step));
        }
    }
    // South polar cap rings.
    for i in (1..n).rev() {
        let z = -(1.0 - (i * i) as f64 / (3.0 * (n * n) as f64));
        let step = PI / (2.0 * i as f64);
        for j in 0..4 * i {
            out.push((z.acos(), (j as f64 + 0.5) * step));
        }
    }
    out
}

/// Hopf map: a sphere point `(theta, phi)` and circle angle `psi` to a unit
/// quaternion `(w, x, y, z)`.
fn hopf_quaternion(theta: f64, phi: f64, psi: f64) -> [f64; 4] {
    let (sh, ch) = (0.5 * theta).sin_cos();
    let (sp, cp) = (0.5 * psi).sin_cos();
    let (spp, cpp) = (phi + 0.5 * psi).sin_cos();
    canonicalize([ch * cp, ch * sp, sh * cpp, sh * spp])
}

/// Resolves the quaternion sign ambiguity: nonnegative scalar part, with the
/// first nonzero component made positive when the scalar part is zero.
fn canonicalize(q: [f64; 4]) -> [f64; 4] {
    let flip = if q[0] != 0.0 {
        q[0] < 0.0
    } else if q[1] != 0.0 {
        q[1] < 0.0
    } else if q[2] != 0.0 {
        q[2] < 0.0
    } else {
        q[3] < 0.0
    };
    if flip {
        [-q[0], -q[1], -q[2], -q[3]]
    } else {
        q
    }
}

/// Builds the level-`level` grid: `12 * 4^level` HEALPix pixels crossed with
/// `6 * 2^level` circle angles, offset by half a step.
pub fn generate_grid(level: u32) -> Result<RotationGrid> {
    if level > MAX_LEVEL {
        return Err(CoreError::LevelOutOfRange(level));
    }
    let nside = 1u32 << level;
    let psi_count = 6 * (1u32 << level);
    let centres = healpix_ring_centres(nside);
    let mut rotations = Vec::with_capacity(centres.len() * psi_count as usize);
    let mut quats = Vec::with_capacity(rotations.capacity());
    for &(theta, phi) in &centres {
        for j in 0..psi_count {
            let psi = 2.0 * PI * (j as f64 + 0.5) / psi_count as f64;
            let q = hopf_quaternion(theta, phi, psi);
            quats.push(q);
            rotations.push(Rotation::from_quaternion(q[0], q[1], q[2], q[3]));
        }
    }
    Ok(RotationGrid {
        level,
        rotations,
        quats,
    })
}

/// Geodesic distance between unit quaternions: `2 acos(|<a, b>|)`.
pub fn quat_distance(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3];
    2.0 * dot.abs().clamp(0.0, 1.0).acos()
}

/// A uniform random unit quaternion (Shoemake's subgroup method).
pub fn random_quaternion(rng: &mut impl RngCore) -> [f64; 4] {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    let u3: f64 = rng.gen();
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    canonicalize([
        a * (2.0 * PI * u2).sin(),
        a * (2.0 * PI * u2).cos(),
        b * (2.0 * PI * u3).sin(),
        b * (2.0 * PI * u3).cos(),
    ])
}

/// A uniform random rotation drawn from `rng`.
pub fn random_rotation(rng: &mut impl RngCore) -> Rotation {
    let q = random_quaternion(rng);
    Rotation::from_quaternion(q[0], q[1], q[2], q[3])
}

/// Estimates the grid's covering resolution: the maximum, over `probes`
/// uniform random rotations, of the geodesic distance to the nearest grid
/// element.
pub fn grid_resolution(grid: &RotationGrid, probes: usize, seed: u64) -> f64 {
    assert!(probes >= 1, "need at least one probe");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let q = random_quaternion(&mut rng);
        // Maximize |dot| instead of minimizing the arccos.
        let mut best_dot: f64 = 0.0;
        for g in &grid.quats {
            let dot =
                (q[0] * g[0] + q[1] * g[1] + q[2] * g[2] + q[3] * g[3]).abs();
            if dot > best_dot {
                best_dot = dot;
            }
        }
        worst = worst.max(2.0 * best_dot.clamp(0.0, 1.0).acos());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::geodesic_distance;

    #[test]
    fn level_0_has_72_rotations() {
        assert_eq!(generate_grid(0).unwrap().len(), 72);
    }

    #[test]
    fn level_1_has_576_rotations() {
        assert_eq!(generate_grid(1).unwrap().len(), 576);
    }

    #[test]
    fn level_out_of_range() {
        assert!(matches!(
            generate_grid(MAX_LEVEL + 1),
            Err(CoreError::LevelOutOfRange(_))
        ));
    }

    #[test]
    fn all_grid_matrices_are_rotations() {
        let grid = generate_grid(1).unwrap();
        for r in grid.rotations() {
            let m = r.matrix();
            let gram = m.transpose() * m;
            for i in 0..3 {
                for j in 0..3 {
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[(i, j)] - target).abs() < 1e-6);
                }
            }
            assert!((m.determinant() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn grid_rotations_pairwise_distinct() {
        let grid = generate_grid(0).unwrap();
        let qs = grid.quaternions();
        let mut min_d = f64::INFINITY;
        for i in 0..qs.len() {
            for j in (i + 1)..qs.len() {
                min_d = min_d.min(quat_distance(&qs[i], &qs[j]));
            }
        }
        assert!(min_d > 1e-6, "minimum pairwise distance {min_d}");
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_grid(1).unwrap();
        let b = generate_grid(1).unwrap();
        for (ra, rb) in a.rotations().iter().zip(b.rotations()) {
            assert_eq!(ra.matrix(), rb.matrix());
        }
    }

    #[test]
    fn healpix_pixel_counts() {
        for nside in [1u32, 2, 4, 8] {
            assert_eq!(
                healpix_ring_centres(nside).len(),
                (12 * nside * nside) as usize
            );
        }
    }

    #[test]
    fn singleton_grid_resolution_against_half_turn() {
        let grid = RotationGrid {
            level: 0,
            rotations: vec![Rotation::identity()],
            quats: vec![[1.0, 0.0, 0.0, 0.0]],
        };
        // A probe at rot-z(pi) sits at distance pi from the identity; random
        // probes cannot exceed that, so check the distance function directly.
        let half_turn = [0.0, 0.0, 0.0, 1.0];
        assert!((quat_distance(&grid.quats[0], &half_turn) - PI).abs() < 1e-12);
        assert!(grid_resolution(&grid, 200, 7) <= PI);
    }

    #[test]
    fn resolution_decreases_with_level() {
        let g0 = generate_grid(0).unwrap();
        let g1 = generate_grid(1).unwrap();
        let r0 = grid_resolution(&g0, 500, 42);
        let r1 = grid_resolution(&g1, 500, 42);
        assert!(r1 < r0, "level 1 resolution {r1} not below level 0 {r0}");
    }

    #[test]
    fn quat_and_matrix_distances_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let qa = random_quaternion(&mut rng);
            let qb = random_quaternion(&mut rng);
            let ra = Rotation::from_quaternion(qa[0], qa[1], qa[2], qa[3]);
            let rb = Rotation::from_quaternion(qb[0], qb[1], qb[2], qb[3]);
            let dq = quat_distance(&qa, &qb);
            let dm = geodesic_distance(&ra, &rb);
            assert!((dq - dm).abs() < 1e-6, "{dq} vs {dm}");
        }
    }

    #[test]
    fn nearest_grid_element_to_grid_element_is_itself() {
        let grid = generate_grid(0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let idx = (rng.next_u32() as usize) % grid.len();
            let q = grid.quaternions()[idx];
            let nearest = grid
                .quaternions()
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    quat_distance(&q, a)
                        .partial_cmp(&quat_distance(&q, b))
                        .unwrap()
                })
                .map(|(i, _)| i)
                .unwrap();
            assert_eq!(nearest, idx);
        }
    }
}
