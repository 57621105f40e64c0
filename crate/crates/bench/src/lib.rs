//! Shared fixtures for the benchmarks.

use canopy_core::geometry::{PointCloud, Vec3};
use canopy_core::icsbp::EmbeddingGrid;
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A reproducible random cloud of `n` points.
pub fn random_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointCloud::from_points(
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.gen::<f64>() - 0.5,
                    (rng.gen::<f64>() - 0.5) * 2.0,
                    (rng.gen::<f64>() - 0.5) * 3.0,
                )
            })
            .collect(),
    )
}

/// Random embeddings and two-channel pre-scope logits of size `h` x `w`.
pub fn random_embeddings(h: usize, w: usize, d: usize, seed: u64) -> (EmbeddingGrid, Array3<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Array3::zeros((h, w, d));
    for v in data.iter_mut() {
        *v = rng.gen::<f64>() * 2.0 - 1.0;
    }
    let mut logits = Array3::zeros((h, w, 2));
    for v in logits.iter_mut() {
        *v = rng.gen::<f64>() * 4.0 - 2.0;
    }
    (EmbeddingGrid::new(data), logits)
}
