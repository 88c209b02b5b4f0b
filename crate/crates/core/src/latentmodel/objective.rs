//! Composite objectives with gradients: one function per batch-item shape
//! (single observation, pair, triplet). Each takes fixed reparameterisation
//! noise so the objective is a deterministic function of the parameters,
//! which is what both the trainer and the finite-difference checks need.
//!
//! Gradients accumulate into a caller-provided flat buffer laid out like
//! `model.params`. Shared-dim masks (Ada-GVAE, Ada-Triplet) are treated as
//! constants of the backward pass.

use crate::error::{Error, Result};
use crate::gridworld::Observation;

use super::losses::{
    ada_shared_mask, distance_with_grads, gaussian_kl_per_dim, softplus,
};
use super::{LatentDistribution, LatentModel, LossConfig, ModelKind};

/// Scalar loss with its components. `triplet` is 0 for non-triplet kinds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
    pub triplet: f64,
}

impl LossBreakdown {
    pub(crate) fn add(&mut self, other: &LossBreakdown) {
        self.total += other.total;
        self.recon += other.recon;
        self.kl += other.kl;
        self.triplet += other.triplet;
    }

    pub(crate) fn scale(&mut self, f: f64) {
        self.total *= f;
        self.recon *= f;
        self.kl *= f;
        self.triplet *= f;
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

/// One encoded observation mid-objective.
struct Forwarded {
    means: Vec<f64>,
    stds: Vec<f64>,
    enc_cache: super::EncoderCache,
}

fn encode(model: &LatentModel, obs: &Observation) -> Forwarded {
    let (means, logstds, enc_cache) = model.encode_forward(&model.params, obs);
    let stds = logstds.iter().map(|l| l.exp()).collect();
    Forwarded { means, stds, enc_cache }
}

/// Decode `z = mu + sigma * eps`, compute `weight * (recon + beta * kl)`
/// for this posterior/observation and backprop everything except the
/// encoder (the caller may still add triplet terms to `d_means`).
/// Returns `(recon, kl, d_means, d_logstds)`.
#[allow(clippy::too_many_arguments)]
fn vae_branch(
    model: &LatentModel,
    means: &[f64],
    stds: &[f64],
    obs: &Observation,
    noise: &[f64],
    beta: f64,
    weight: f64,
    grads: Option<&mut [f64]>,
) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let z: Vec<f64> = means
        .iter()
        .zip(stds)
        .zip(noise)
        .map(|((m, s), e)| m + s * e)
        .collect();
    let (recon_img, dec_cache) = model.decode_forward(&model.params, &z);
    let recon: f64 = recon_img
        .iter()
        .zip(obs.iter())
        .map(|(r, x)| (r - x) * (r - x))
        .sum();
    let kl: f64 = means
        .iter()
        .zip(stds)
        .map(|(&m, &s)| 0.5 * (m * m + s * s - 1.0 - 2.0 * s.ln()))
        .sum();
    let dim = means.len();
    let (mut d_means, mut d_logstds) = (vec![0.0; dim], vec![0.0; dim]);
    if let Some(grads) = grads {
        let mut d_recon = recon_img;
        ndarray::Zip::from(&mut d_recon).and(obs).for_each(|r, &x| {
            *r = weight * 2.0 * (*r - x);
        });
        let dz = model.decode_backward(&model.params, grads, &dec_cache, &d_recon);
        for i in 0..dim {
            d_means[i] = dz[i] + weight * beta * means[i];
            d_logstds[i] = dz[i] * noise[i] * stds[i] + weight * beta * (stds[i] * stds[i] - 1.0);
        }
    }
    (recon, kl, d_means, d_logstds)
}

/// beta-VAE objective for one observation: `recon + beta * kl`,
/// reparameterised with the given noise. Used by the `Vae` (beta = 1) and
/// `BetaVae` kinds.
pub fn vae_item_loss(
    model: &LatentModel,
    obs: &Observation,
    noise: &[f64],
    cfg: &LossConfig,
    mut grads: Option<&mut [f64]>,
) -> Result<LossBreakdown> {
    model.check_observation(obs)?;
    expect_noise(noise, model.latent_dim)?;
    let beta = effective_beta(cfg);
    let fwd = encode(model, obs);
    let (recon, kl, d_means, d_logstds) =
        vae_branch(model, &fwd.means, &fwd.stds, obs, noise, beta, 1.0, grads.as_deref_mut());
    if let Some(grads) = grads {
        model.encode_backward(&model.params, grads, &fwd.enc_cache, &d_means, &d_logstds);
    }
    Ok(LossBreakdown { total: recon + beta * kl, recon, kl, triplet: 0.0 })
}

/// Ada-GVAE objective for one pair: per-dim posterior KL picks shared
/// dims, shared dims are replaced by the averaged Gaussian in both
/// members, and each member contributes `(recon + beta * kl) / 2` from its
/// averaged posterior.
pub fn pair_item_loss(
    model: &LatentModel,
    obs_a: &Observation,
    obs_b: &Observation,
    noise_a: &[f64],
    noise_b: &[f64],
    cfg: &LossConfig,
    mut grads: Option<&mut [f64]>,
) -> Result<LossBreakdown> {
    model.check_observation(obs_a)?;
    model.check_observation(obs_b)?;
    expect_noise(noise_a, model.latent_dim)?;
    expect_noise(noise_b, model.latent_dim)?;
    let beta = effective_beta(cfg);
    let fwd_a = encode(model, obs_a);
    let fwd_b = encode(model, obs_b);
    let dist_a = LatentDistribution { means: fwd_a.means.clone(), stds: fwd_a.stds.clone() };
    let dist_b = LatentDistribution { means: fwd_b.means.clone(), stds: fwd_b.stds.clone() };
    let delta = gaussian_kl_per_dim(&dist_a, &dist_b);
    let mask = ada_shared_mask(&delta)?;
    let (avg_a, avg_b) = super::losses::ada_gvae_average(&dist_a, &dist_b, &mask);

    let dim = model.latent_dim;
    let mut total = LossBreakdown::default();
    // Collected d(mean tilde), d(logstd tilde) per member.
    let mut d_avg = Vec::with_capacity(2);
    for (avg, obs, noise) in [(&avg_a, obs_a, noise_a), (&avg_b, obs_b, noise_b)] {
        let (recon, kl, d_means, d_logstds) =
            vae_branch(model, &avg.means, &avg.stds, obs, noise, beta, 0.5, grads.as_deref_mut());
        total.add(&LossBreakdown {
            total: 0.5 * (recon + beta * kl),
            recon: 0.5 * recon,
            kl: 0.5 * kl,
            triplet: 0.0,
        });
        d_avg.push((d_means, d_logstds));
    }

    if let Some(grads) = grads {
        // Chain averaged-posterior gradients back to the raw posteriors.
        // Shared dims: mu~ = (mu_a + mu_b)/2 for both members, and
        // sigma~^2 = (sigma_a^2 + sigma_b^2)/2, so
        // d logstd_a = (sigma_a^2 / (2 sigma~^2)) * (sum of member d logstd~).
        let mut dm_a = vec![0.0; dim];
        let mut dl_a = vec![0.0; dim];
        let mut dm_b = vec![0.0; dim];
        let mut dl_b = vec![0.0; dim];
        for i in 0..dim {
            if mask[i] {
                let dm_sum = d_avg[0].0[i] + d_avg[1].0[i];
                let dl_sum = d_avg[0].1[i] + d_avg[1].1[i];
                let var_avg = avg_a.stds[i] * avg_a.stds[i];
                dm_a[i] = 0.5 * dm_sum;
                dm_b[i] = 0.5 * dm_sum;
                dl_a[i] = dl_sum * (dist_a.stds[i] * dist_a.stds[i]) / (2.0 * var_avg);
                dl_b[i] = dl_sum * (dist_b.stds[i] * dist_b.stds[i]) / (2.0 * var_avg);
            } else {
                dm_a[i] = d_avg[0].0[i];
                dl_a[i] = d_avg[0].1[i];
                dm_b[i] = d_avg[1].0[i];
                dl_b[i] = d_avg[1].1[i];
            }
        }
        model.encode_backward(&model.params, grads, &fwd_a.enc_cache, &dm_a, &dl_a);
        model.encode_backward(&model.params, grads, &fwd_b.enc_cache, &dm_b, &dl_b);
    }
    Ok(total)
}

/// Triplet objective for one (anchor, positive, negative) item:
/// `alpha * triplet + (1/3) * sum of the three beta-VAE losses`. The
/// triplet distance runs on posterior means. `AdaTvae` swaps in the
/// adaptive anchor-negative weighting.
pub fn triplet_item_loss(
    model: &LatentModel,
    obs: [&Observation; 3],
    noise: [&[f64]; 3],
    cfg: &LossConfig,
    mut grads: Option<&mut [f64]>,
) -> Result<LossBreakdown> {
    for o in obs {
        model.check_observation(o)?;
    }
    for n in noise {
        expect_noise(n, model.latent_dim)?;
    }
    let beta = effective_beta(cfg);
    let fwds: Vec<Forwarded> = obs.iter().map(|o| encode(model, o)).collect();

    // Triplet term on posterior means.
    let (z_a, z_p, z_n) = (&fwds[0].means, &fwds[1].means, &fwds[2].means);
    let weights = match cfg.model_kind {
        ModelKind::AdaTvae => Some(super::losses::ada_triplet_weights(z_a, z_n, cfg)?),
        _ => None,
    };
    let (d_ap, mut g_ap_a, g_ap_p) = distance_with_grads(z_a, z_p, None, cfg.latent_distance);
    let (d_an, g_an_a, g_an_n) =
        distance_with_grads(z_a, z_n, weights.as_deref(), cfg.latent_distance);
    let t = d_ap - d_an;
    let triplet = softplus(t);
    let sig = crate::nn::sigmoid(t);

    let mut total = LossBreakdown {
        total: cfg.alpha * triplet,
        recon: 0.0,
        kl: 0.0,
        triplet,
    };

    // d triplet / d z: sigma(t) * (d_ap grads - d_an grads).
    let dim = model.latent_dim;
    let mut d_trip = [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]];
    for i in 0..dim {
        g_ap_a[i] = cfg.alpha * sig * (g_ap_a[i] - g_an_a[i]);
        d_trip[1][i] = cfg.alpha * sig * g_ap_p[i];
        d_trip[2][i] = cfg.alpha * sig * (-g_an_n[i]);
    }
    d_trip[0] = g_ap_a;

    for (k, fwd) in fwds.iter().enumerate() {
        let (recon, kl, mut d_means, d_logstds) = vae_branch(
            model,
            &fwd.means,
            &fwd.stds,
            obs[k],
            noise[k],
            beta,
            1.0 / 3.0,
            grads.as_deref_mut(),
        );
        total.add(&LossBreakdown {
            total: (recon + beta * kl) / 3.0,
            recon: recon / 3.0,
            kl: kl / 3.0,
            triplet: 0.0,
        });
        if let Some(grads) = grads.as_deref_mut() {
            for i in 0..dim {
                d_means[i] += d_trip[k][i];
            }
            model.encode_backward(&model.params, grads, &fwd.enc_cache, &d_means, &d_logstds);
        }
    }
    Ok(total)
}

/// Mean beta-VAE loss over a batch of observations with per-item noise.
/// beta = 1 recovers the plain VAE.
pub fn beta_vae_loss(
    model: &LatentModel,
    batch: &[Observation],
    noises: &[Vec<f64>],
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    if batch.is_empty() || batch.len() != noises.len() {
        return Err(Error::Precondition("batch and noises must be equal and non-empty".into()));
    }
    let mut acc = LossBreakdown::default();
    for (obs, noise) in batch.iter().zip(noises) {
        acc.add(&vae_item_loss(model, obs, noise, cfg, None)?);
    }
    acc.scale(1.0 / batch.len() as f64);
    Ok(acc)
}

/// Mean combined triplet objective over a batch of triplets.
pub fn total_loss(
    model: &LatentModel,
    batch: &[[Observation; 3]],
    noises: &[[Vec<f64>; 3]],
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    if !cfg.model_kind.is_triplet() {
        return Err(Error::Precondition("total_loss needs a triplet model kind".into()));
    }
    if batch.is_empty() || batch.len() != noises.len() {
        return Err(Error::Precondition("batch and noises must be equal and non-empty".into()));
    }
    let mut acc = LossBreakdown::default();
    for (obs, noise) in batch.iter().zip(noises) {
        acc.add(&triplet_item_loss(
            model,
            [&obs[0], &obs[1], &obs[2]],
            [&noise[0], &noise[1], &noise[2]],
            cfg,
            None,
        )?);
    }
    acc.scale(1.0 / batch.len() as f64);
    Ok(acc)
}

fn effective_beta(cfg: &LossConfig) -> f64 {
    match cfg.model_kind {
        ModelKind::Vae => 1.0,
        _ => cfg.beta,
    }
}

fn expect_noise(noise: &[f64], dim: usize) -> Result<()> {
    if noise.len() != dim {
        return Err(Error::ShapeMismatch {
            expected: format!("noise of length {dim}"),
            actual: format!("{}", noise.len()),
        });
    }
    Ok(())
}
