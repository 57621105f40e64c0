//! Training objective terms as pure functions.
//!
//! Colour and attention terms treat the RGB likelihood as a product of
//! three per-channel Gaussian densities with a shared standard deviation.
//! A floor of `LOG_FLOOR` inside every logarithm keeps all terms finite.

use ndarray::Array2;

use crate::error::{CoreError, Result};
use crate::geometry::Vec3;

/// Floor applied inside logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

/// Diagonal Gaussian given by per-dimension mean and standard deviation.
#[derive(Debug, Clone)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl GaussianParams {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Self {
        assert_eq!(mean.len(), std.len());
        assert!(std.iter().all(|&s| s > 0.0), "std must be positive");
        GaussianParams { mean, std }
    }
}

/// All loss terms of one frame; `total` is their unweighted sum.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    pub colour: f64,
    pub depth: f64,
    pub kl: f64,
    pub r#where: f64,
    pub att: f64,
    pub scope: f64,
    pub total: f64,
}

/// Isotropic RGB Gaussian density: product of three channel pdfs.
pub fn rgb_gaussian_density(observed: &Vec3, mean: &Vec3, std: f64) -> f64 {
    let norm = 1.0 / (std * (2.0 * std::f64::consts::PI).sqrt());
    let mut pdf = 1.0;
    for c in 0..3 {
        let z = (observed[c] - mean[c]) / std;
        pdf *= norm * (-0.5 * z * z).exp();
    }
    pdf
}

/// Texture term: negative log of the density-weighted colour mixture at a
/// surface sample.
pub fn colour_loss(
    observed: &Vec3,
    colours: &[Vec3],
    sigma_hat_surface: &[f64],
    sigma_std: f64,
    sigma_max: f64,
) -> f64 {
    assert_eq!(colours.len(), sigma_hat_surface.len());
    let mut mixture = 0.0;
    for (c, &w) in colours.iter().zip(sigma_hat_surface) {
        mixture += rgb_gaussian_density(observed, c, sigma_std) * w / sigma_max;
    }
    -mixture.max(LOG_FLOOR).ln()
}

/// Depth term: `-log sigma(surface) + sigma(air) / rho_air`.
pub fn depth_loss(sigma_surface: f64, sigma_air: f64, rho_air: f64) -> f64 {
    assert!(rho_air > 0.0, "rho_air must be positive");
    -sigma_surface.max(LOG_FLOOR).ln() + sigma_air / rho_air
}

/// KL divergence between diagonal Gaussians `q` and `p`.
pub fn kl_diag_gaussian(q: &GaussianParams, p: &GaussianParams) -> Result<f64> {
    if q.mean.len() != p.mean.len() {
        return Err(CoreError::DimMismatch(q.mean.len(), p.mean.len()));
    }
    let mut kl = 0.0;
    for d in 0..q.mean.len() {
        let (qm, qs) = (q.mean[d], q.std[d]);
        let (pm, ps) = (p.mean[d], p.std[d]);
        kl += (ps / qs).ln() + (qs * qs + (qm - pm) * (qm - pm)) / (2.0 * ps * ps) - 0.5;
    }
    Ok(kl)
}

/// Squared-distance supervision of predicted centres against shape-derived
/// centres; idle slots are excluded.
pub fn where_loss(t_hat: &[Vec3], t_shape: &[Vec3], active: &[bool]) -> f64 {
    assert_eq!(t_hat.len(), t_shape.len());
    assert_eq!(t_hat.len(), active.len());
    let mut loss = 0.0;
    for k in 0..t_hat.len() {
        if active[k] {
            loss += (t_hat[k] - t_shape[k]).norm_squared();
        }
    }
    loss
}

/// One surface pixel's inputs to the attention term.
#[derive(Debug, Clone)]
pub struct AttentionSample {
    /// Slot mask values `m_k` at the pixel.
    pub masks: Vec<f64>,
    /// Slot colours at the surface point.
    pub colours: Vec<Vec3>,
    /// Slot density shares at the surface point.
    pub sigma_hat: Vec<f64>,
    pub observed: Vec3,
}

/// Attention-mask supervision summed over surface samples.
pub fn attention_loss(samples: &[AttentionSample], sigma_std: f64, sigma_max: f64) -> f64 {
    let mut loss = 0.0;
    for s in samples {
        let mut weighted = 0.0;
        let mut plain = 0.0;
        for k in 0..s.masks.len() {
            let share = s.sigma_hat[k] / sigma_max;
            weighted +=
                s.masks[k] * rgb_gaussian_density(&s.observed, &s.colours[k], sigma_std) * share;
            plain += s.masks[k] * share;
        }
        loss -= weighted.max(LOG_FLOOR).ln() + plain.max(LOG_FLOOR).ln();
    }
    loss
}

/// Penalty on the unused remaining scope: plain pixel sum.
pub fn scope_loss(remaining_scope: &Array2<f64>) -> f64 {
    remaining_scope.sum()
}

/// Assembles the unweighted total while retaining the breakdown.
pub fn total_loss(
    colour: f64,
    depth: f64,
    kl: f64,
    where_: f64,
    att: f64,
    scope: f64,
) -> LossBreakdown {
    LossBreakdown {
        colour,
        depth,
        kl,
        r#where: where_,
        att,
        scope,
        total: colour + depth + kl + where_ + att + scope,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn colour_loss_perfect_reconstruction_matches_pdf_oracle() {
        let observed = Vec3::new(0.3, 0.6, 0.9);
        let loss = colour_loss(&observed, &[observed], &[10.0], 0.1, 10.0);
        // Independent oracle: direct evaluation of the three channel pdfs.
        let pdf = (1.0 / (0.1 * (2.0 * std::f64::consts::PI).sqrt())).powi(3);
        assert_relative_eq!(loss, -pdf.ln(), epsilon = 1e-12);
    }

    #[test]
    fn colour_loss_vanishing_weight_is_floored() {
        let observed = Vec3::zeros();
        let loss = colour_loss(&observed, &[observed], &[0.0], 0.1, 10.0);
        assert_relative_eq!(loss, -LOG_FLOOR.ln(), epsilon = 1e-9);
    }

    #[test]
    fn colour_loss_mixture_linearity() {
        let observed = Vec3::new(0.2, 0.2, 0.2);
        let c = Vec3::new(0.5, 0.1, 0.8);
        let split = colour_loss(&observed, &[c, c], &[3.0, 3.0], 0.1, 10.0);
        let merged = colour_loss(&observed, &[c], &[6.0], 0.1, 10.0);
        assert_relative_eq!(split, merged, epsilon = 1e-12);
    }

    #[test]
    fn depth_loss_closed_forms() {
        assert_relative_eq!(depth_loss(10.0, 0.0, 1.0), -(10f64.ln()), epsilon = 1e-12);
        assert_relative_eq!(depth_loss(1.0, 1.0, 1.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn depth_loss_monotone_in_air_density() {
        let a = depth_loss(5.0, 0.1, 2.0);
        let b = depth_loss(5.0, 0.2, 2.0);
        assert!(b > a);
    }

    #[test]
    fn kl_zero_for_identical() {
        let q = GaussianParams::new(vec![0.4, -1.0], vec![0.5, 2.0]);
        assert_relative_eq!(kl_diag_gaussian(&q, &q).unwrap(), 0.0);
    }

    #[test]
    fn kl_unit_mean_shift() {
        let q = GaussianParams::new(vec![1.0], vec![1.0]);
        let p = GaussianParams::new(vec![0.0], vec![1.0]);
        assert_relative_eq!(kl_diag_gaussian(&q, &p).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn kl_double_std() {
        let q = GaussianParams::new(vec![0.0], vec![2.0]);
        let p = GaussianParams::new(vec![0.0], vec![1.0]);
        let expected = (0.5f64).ln() + 2.0 - 0.5;
        assert_relative_eq!(kl_diag_gaussian(&q, &p).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn kl_dim_mismatch() {
        let q = GaussianParams::new(vec![0.0], vec![1.0]);
        let p = GaussianParams::new(vec![0.0, 0.0], vec![1.0, 1.0]);
        assert!(matches!(
            kl_diag_gaussian(&q, &p),
            Err(CoreError::DimMismatch(1, 2))
        ));
    }

    #[test]
    fn where_loss_cases() {
        let a = Vec3::zeros();
        let b = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(where_loss(&[b], &[b], &[true]), 0.0);
        assert_relative_eq!(where_loss(&[a], &[b], &[true]), 1.0);
        // Idle slot contributes nothing.
        assert_eq!(where_loss(&[a], &[b], &[false]), 0.0);
    }

    #[test]
    fn attention_loss_perfect_assignment() {
        let observed = Vec3::new(0.1, 0.5, 0.9);
        let sample = AttentionSample {
            masks: vec![1.0, 0.0],
            colours: vec![observed, Vec3::zeros()],
            sigma_hat: vec![10.0, 0.0],
            observed,
        };
        let pdf = (1.0 / (0.1 * (2.0 * std::f64::consts::PI).sqrt())).powi(3);
        let expected = -(pdf.ln()) - 1.0f64.ln();
        assert_relative_eq!(attention_loss(&[sample], 0.1, 10.0), expected, epsilon = 1e-9);
    }

    #[test]
    fn attention_loss_zero_masks_floored() {
        let sample = AttentionSample {
            masks: vec![0.0],
            colours: vec![Vec3::zeros()],
            sigma_hat: vec![10.0],
            observed: Vec3::zeros(),
        };
        let loss = attention_loss(&[sample], 0.1, 10.0);
        assert_relative_eq!(loss, -2.0 * LOG_FLOOR.ln(), epsilon = 1e-9);
    }

    #[test]
    fn attention_loss_prefers_occupied_slot() {
        let observed = Vec3::new(0.5, 0.5, 0.5);
        let mk = |masks: Vec<f64>| AttentionSample {
            masks,
            colours: vec![observed, observed],
            sigma_hat: vec![10.0, 0.0],
            observed,
        };
        let good = attention_loss(&[mk(vec![1.0, 0.0])], 0.1, 10.0);
        let bad = attention_loss(&[mk(vec![0.0, 1.0])], 0.1, 10.0);
        assert!(bad > good);
    }

    #[test]
    fn scope_loss_cases() {
        assert_eq!(scope_loss(&Array2::zeros((3, 3))), 0.0);
        assert_relative_eq!(scope_loss(&Array2::from_elem((2, 2), 0.5)), 2.0);
        assert_relative_eq!(scope_loss(&Array2::ones((4, 5))), 20.0);
    }

    #[test]
    fn total_loss_addition() {
        let b = total_loss(1.0, 2.0, 3.0, 4.0, 5.0, 6.0);
        assert_eq!(b.total, 21.0);
        assert_eq!(b.colour, 1.0);
        assert_eq!(b.scope, 6.0);
        let all_zero = total_loss(0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(all_zero.total, 0.0);
    }
}
