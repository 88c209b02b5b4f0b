//! Loss primitives: KL regulariser, reconstruction error, soft-margin
//! triplet loss and its adaptive variant, and the Ada-GVAE posterior
//! averaging.

use crate::error::{Error, Result};
use crate::gridworld::Observation;

use super::{LatentDistance, LatentDistribution, LossConfig};

/// Closed-form KL to the standard normal prior:
/// `sum_i 0.5 * (mu_i^2 + sigma_i^2 - 1 - ln sigma_i^2)`.
pub fn kl_regulariser(dist: &LatentDistribution) -> f64 {
    dist.means
        .iter()
        .zip(&dist.stds)
        .map(|(&m, &s)| 0.5 * (m * m + s * s - 1.0 - (s * s).ln()))
        .sum()
}

/// Pixel-wise squared error, summed over pixels.
pub fn reconstruction_loss(a: &Observation, b: &Observation) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", a.dim()),
            actual: format!("{:?}", b.dim()),
        });
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Numerically stable `ln(1 + exp(t))`.
pub(crate) fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Distance between two latent vectors, optionally with per-dimension
/// weights applied to both arguments first. Returns the distance and its
/// gradients w.r.t. `u` and `v`.
pub(crate) fn distance_with_grads(
    u: &[f64],
    v: &[f64],
    weights: Option<&[f64]>,
    kind: LatentDistance,
) -> (f64, Vec<f64>, Vec<f64>) {
    debug_assert_eq!(u.len(), v.len());
    let w_at = |i: usize| weights.map_or(1.0, |w| w[i]);
    match kind {
        LatentDistance::L1 => {
            let mut d = 0.0;
            let mut du = vec![0.0; u.len()];
            let mut dv = vec![0.0; v.len()];
            for i in 0..u.len() {
                let w = w_at(i);
                let diff = w * (u[i] - v[i]);
                d += diff.abs();
                let s = if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                du[i] = w * s;
                dv[i] = -w * s;
            }
            (d, du, dv)
        }
        LatentDistance::L2 => {
            let mut sq = 0.0;
            for i in 0..u.len() {
                let diff = w_at(i) * (u[i] - v[i]);
                sq += diff * diff;
            }
            let d = sq.sqrt();
            let mut du = vec![0.0; u.len()];
            let mut dv = vec![0.0; v.len()];
            if d > 0.0 {
                for i in 0..u.len() {
                    let w = w_at(i);
                    let g = w * w * (u[i] - v[i]) / d;
                    du[i] = g;
                    dv[i] = -g;
                }
            }
            (d, du, dv)
        }
    }
}

/// Latent distance without gradients.
pub fn latent_distance(u: &[f64], v: &[f64], kind: LatentDistance) -> f64 {
    distance_with_grads(u, v, None, kind).0
}

/// Soft-margin triplet loss `ln(1 + exp(d(a,p) - d(a,n)))` on latent
/// vectors.
pub fn triplet_loss(z_a: &[f64], z_p: &[f64], z_n: &[f64], cfg: &LossConfig) -> f64 {
    let d_ap = latent_distance(z_a, z_p, cfg.latent_distance);
    let d_an = latent_distance(z_a, z_n, cfg.latent_distance);
    softplus(d_ap - d_an)
}

/// Shared-dimension estimate: `mask[i]` is true iff
/// `delta_i < (min delta + max delta) / 2` (strict). All-equal deltas give
/// an empty mask.
pub fn ada_shared_mask(delta: &[f64]) -> Result<Vec<bool>> {
    if delta.len() < 2 {
        return Err(Error::Precondition("ada_shared_mask needs at least 2 dims".into()));
    }
    if delta.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::Precondition("divergences must be finite and non-negative".into()));
    }
    let min = delta.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = delta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let threshold = 0.5 * (min + max);
    Ok(delta.iter().map(|&d| d < threshold).collect())
}

/// Per-dimension KL divergence between two diagonal Gaussians,
/// `KL(a_i || b_i)`. Used to estimate which dims a pair shares.
pub fn gaussian_kl_per_dim(a: &LatentDistribution, b: &LatentDistribution) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.means
        .iter()
        .zip(&a.stds)
        .zip(b.means.iter().zip(&b.stds))
        .map(|((&ma, &sa), (&mb, &sb))| {
            (sb / sa).ln() + (sa * sa + (ma - mb) * (ma - mb)) / (2.0 * sb * sb) - 0.5
        })
        .collect()
}

/// Average the two posteriors on masked (shared) dims: mean
/// `(mu_a + mu_b) / 2`, variance `(sigma_a^2 + sigma_b^2) / 2`. Unmasked
/// dims pass through unchanged.
pub fn ada_gvae_average(
    dist_a: &LatentDistribution,
    dist_b: &LatentDistribution,
    mask: &[bool],
) -> (LatentDistribution, LatentDistribution) {
    debug_assert_eq!(dist_a.len(), dist_b.len());
    debug_assert_eq!(dist_a.len(), mask.len());
    let mut out_a = dist_a.clone();
    let mut out_b = dist_b.clone();
    for i in 0..mask.len() {
        if mask[i] {
            let mean = 0.5 * (dist_a.means[i] + dist_b.means[i]);
            let var = 0.5 * (dist_a.stds[i] * dist_a.stds[i] + dist_b.stds[i] * dist_b.stds[i]);
            let std = var.sqrt();
            out_a.means[i] = mean;
            out_b.means[i] = mean;
            out_a.stds[i] = std;
            out_b.stds[i] = std;
        }
    }
    (out_a, out_b)
}

/// Adaptive triplet loss: estimate shared dims from anchor-negative
/// distances, then down-weight them inside the anchor-negative distance
/// only.
pub fn ada_triplet_loss(z_a: &[f64], z_p: &[f64], z_n: &[f64], cfg: &LossConfig) -> Result<f64> {
    let weights = ada_triplet_weights(z_a, z_n, cfg)?;
    let d_ap = latent_distance(z_a, z_p, cfg.latent_distance);
    let (d_an, _, _) = distance_with_grads(z_a, z_n, Some(&weights), cfg.latent_distance);
    Ok(softplus(d_ap - d_an))
}

/// Weight vector for the adaptive triplet: `shared_weight` on dims the
/// mask marks shared, 1 elsewhere.
pub(crate) fn ada_triplet_weights(z_a: &[f64], z_n: &[f64], cfg: &LossConfig) -> Result<Vec<f64>> {
    let delta: Vec<f64> = z_a.iter().zip(z_n).map(|(a, n)| (a - n).abs()).collect();
    let mask = ada_shared_mask(&delta)?;
    Ok(mask
        .iter()
        .map(|&shared| if shared { cfg.shared_weight } else { 1.0 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latentmodel::ModelKind;
    use approx::assert_relative_eq;
    use ndarray::Array3;

    fn cfg_l1() -> LossConfig {
        LossConfig {
            model_kind: ModelKind::BetaTvae,
            latent_distance: LatentDistance::L1,
            ..LossConfig::default()
        }
    }

    #[test]
    fn kl_zero_at_prior() {
        let d = LatentDistribution::new(vec![0.0; 4], vec![1.0; 4]).unwrap();
        assert_eq!(kl_regulariser(&d), 0.0);
    }

    #[test]
    fn kl_unit_mean_is_half() {
        let d = LatentDistribution::new(vec![1.0], vec![1.0]).unwrap();
        assert_relative_eq!(kl_regulariser(&d), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn kl_wide_posterior_closed_form() {
        // 0.5 * (4 - 1 - ln 4) = 0.806852819440055
        let d = LatentDistribution::new(vec![0.0], vec![2.0]).unwrap();
        assert_relative_eq!(kl_regulariser(&d), 0.806852819440055, max_relative = 1e-12);
    }

    /// KL against midpoint-rule numerical integration of
    /// `∫ q(z) ln(q(z)/p(z)) dz`, the independent oracle.
    #[test]
    fn kl_matches_numerical_integration() {
        let cases = [(0.0, 2.0), (1.0, 1.0), (-1.5, 0.3), (0.7, 1.9)];
        for &(mu, sigma) in &cases {
            let d = LatentDistribution::new(vec![mu], vec![sigma]).unwrap();
            let closed = kl_regulariser(&d);
            let n = 400_000;
            let lo = mu - 12.0 * sigma;
            let hi = mu + 12.0 * sigma;
            let h = (hi - lo) / n as f64;
            let mut acc = 0.0;
            for i in 0..n {
                let z = lo + (i as f64 + 0.5) * h;
                let q = (-(z - mu) * (z - mu) / (2.0 * sigma * sigma)).exp()
                    / (sigma * (2.0 * std::f64::consts::PI).sqrt());
                let p = (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
                if q > 0.0 {
                    acc += q * (q / p).ln() * h;
                }
            }
            assert_relative_eq!(closed, acc, max_relative = 1e-6);
        }
    }

    #[test]
    fn kl_non_negative_and_zero_only_at_prior() {
        let d = LatentDistribution::new(vec![0.1, -0.2], vec![0.9, 1.1]).unwrap();
        assert!(kl_regulariser(&d) > 0.0);
    }

    #[test]
    fn reconstruction_loss_examples() {
        let zeros = Array3::zeros((1, 64, 64));
        let ones = Array3::from_elem((1, 64, 64), 1.0);
        assert_eq!(reconstruction_loss(&zeros, &zeros).unwrap(), 0.0);
        assert_eq!(reconstruction_loss(&zeros, &ones).unwrap(), 4096.0);
        // Symmetry.
        let a = Array3::from_shape_fn((1, 4, 4), |(_, r, c)| (r * 4 + c) as f64 / 16.0);
        let b = Array3::from_shape_fn((1, 4, 4), |(_, r, c)| ((r + c) % 3) as f64 / 3.0);
        assert_eq!(
            reconstruction_loss(&a, &b).unwrap(),
            reconstruction_loss(&b, &a).unwrap()
        );
        let c = Array3::zeros((1, 2, 2));
        assert!(reconstruction_loss(&a, &c).is_err());
    }

    #[test]
    fn triplet_equal_distances_is_ln2() {
        let cfg = cfg_l1();
        let loss = triplet_loss(&[0.0], &[1.0], &[-1.0], &cfg);
        assert_relative_eq!(loss, std::f64::consts::LN_2, max_relative = 1e-12);
    }

    #[test]
    fn triplet_vanishes_for_distant_negative() {
        let cfg = cfg_l1();
        let loss = triplet_loss(&[0.0], &[0.0], &[1e6], &cfg);
        assert!(loss.abs() < 1e-12);
        assert!(loss >= 0.0);
    }

    #[test]
    fn triplet_scalar_example() {
        // d_ap = 1, d_an = 3: ln(1 + exp(-2)) = 0.126928011042972
        let cfg = cfg_l1();
        let loss = triplet_loss(&[0.0], &[1.0], &[3.0], &cfg);
        assert_relative_eq!(loss, 0.126928011042972, max_relative = 1e-12);
    }

    #[test]
    fn mask_examples() {
        assert_eq!(ada_shared_mask(&[0.1, 0.5, 0.9]).unwrap(), vec![true, false, false]);
        assert_eq!(ada_shared_mask(&[0.3, 0.3, 0.3]).unwrap(), vec![false, false, false]);
        assert_eq!(ada_shared_mask(&[0.0, 1.0]).unwrap(), vec![true, false]);
        assert!(ada_shared_mask(&[0.5]).is_err());
        assert!(ada_shared_mask(&[0.5, -0.1]).is_err());
        assert!(ada_shared_mask(&[0.5, f64::NAN]).is_err());
    }

    #[test]
    fn averaging_idempotent_on_equal_inputs() {
        let d = LatentDistribution::new(vec![0.4, -1.0], vec![0.7, 1.2]).unwrap();
        let (a, b) = ada_gvae_average(&d, &d, &[true, true]);
        assert_eq!(a, d);
        assert_eq!(b, d);
    }

    #[test]
    fn averaging_merges_shared_dims() {
        let da = LatentDistribution::new(vec![0.0], vec![1.0]).unwrap();
        let db = LatentDistribution::new(vec![2.0], vec![1.0]).unwrap();
        let (a, b) = ada_gvae_average(&da, &db, &[true]);
        assert_eq!(a.means, vec![1.0]);
        assert_eq!(b.means, vec![1.0]);
        assert_relative_eq!(a.stds[0], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn averaging_passes_unmasked_dims_through() {
        let da = LatentDistribution::new(vec![0.3, 5.0], vec![0.5, 2.0]).unwrap();
        let db = LatentDistribution::new(vec![-0.3, -5.0], vec![1.5, 0.2]).unwrap();
        let (a, b) = ada_gvae_average(&da, &db, &[true, false]);
        assert_eq!(a.means[1], 5.0);
        assert_eq!(b.means[1], -5.0);
        assert_eq!(a.stds[1], 2.0);
        assert_eq!(b.stds[1], 0.2);
    }

    #[test]
    fn ada_triplet_hand_example() {
        // z_a = (0,0), z_n = (0.1, 2), z_p = (1,1), shared_weight = 0.5, L1.
        // delta = (0.1, 2), threshold 1.05, shared = {0};
        // d_an = 0.5*0.1 + 2 = 2.05, d_ap = 2, ln(1+exp(-0.05)) = 0.668160...
        let cfg = LossConfig { shared_weight: 0.5, ..cfg_l1() };
        let loss = ada_triplet_loss(&[0.0, 0.0], &[1.0, 1.0], &[0.1, 2.0], &cfg).unwrap();
        assert_relative_eq!(loss, softplus(-0.05), max_relative = 1e-12);
        assert_relative_eq!(loss, 0.668459648013286, max_relative = 1e-9);
    }

    #[test]
    fn ada_triplet_reduces_to_triplet_without_shared_dims() {
        // Equal deltas give an empty mask, so weights are all 1.
        let cfg = cfg_l1();
        let z_a = [0.0, 0.0];
        let z_n = [1.0, -1.0];
        let z_p = [0.5, 0.2];
        let ada = ada_triplet_loss(&z_a, &z_p, &z_n, &cfg).unwrap();
        let plain = triplet_loss(&z_a, &z_p, &z_n, &cfg);
        assert_eq!(ada, plain);
    }

    #[test]
    fn ada_triplet_zero_weight_drops_shared_dims() {
        // With shared_weight -> 0 the anchor-negative distance only sees
        // non-shared dims.
        let cfg = LossConfig { shared_weight: 1e-12, ..cfg_l1() };
        let z_a = [0.0, 0.0];
        let z_n = [0.1, 2.0];
        let z_p = [1.0, 1.0];
        let loss = ada_triplet_loss(&z_a, &z_p, &z_n, &cfg).unwrap();
        assert_relative_eq!(loss, softplus(2.0 - 2.0), max_relative = 1e-9);
    }

    #[test]
    fn gaussian_kl_per_dim_zero_for_identical() {
        let d = LatentDistribution::new(vec![0.5, -2.0], vec![0.8, 1.7]).unwrap();
        for v in gaussian_kl_per_dim(&d, &d) {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_kl_per_dim_non_negative() {
        let a = LatentDistribution::new(vec![0.5, -2.0, 0.0], vec![0.8, 1.7, 0.1]).unwrap();
        let b = LatentDistribution::new(vec![-0.4, 1.0, 0.2], vec![1.3, 0.4, 2.0]).unwrap();
        for v in gaussian_kl_per_dim(&a, &b) {
            assert!(v >= 0.0);
        }
    }
}
