//! Gaussian encoder/decoder pair and the five training objectives: VAE,
//! beta-VAE, Ada-GVAE, beta-TVAE and Ada-TVAE.
//!
//! The encoder is a strided conv stack into a dense head emitting latent
//! means and log-stds; the decoder mirrors it with transposed convs and a
//! sigmoid output. All parameters live in one flat `f64` vector.

mod checkpoint;
mod losses;
mod objective;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use losses::{
    ada_gvae_average, ada_shared_mask, ada_triplet_loss, gaussian_kl_per_dim, kl_regulariser,
    latent_distance, reconstruction_loss, triplet_loss,
};
pub use objective::{
    beta_vae_loss, pair_item_loss, total_loss, triplet_item_loss, vae_item_loss, LossBreakdown,
};
pub use train::{train, TrainConfig, TrainOutput};

use ndarray::{Array3, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gridworld::{FactorState, GridSpec, Observation};
use crate::metrics::LatentMap;
use crate::nn::{Conv2d, ConvTranspose2d, Dense, ParamAlloc};

/// Per-dimension Gaussian posterior parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDistribution {
    pub means: Vec<f64>,
    /// Strictly positive.
    pub stds: Vec<f64>,
}

impl LatentDistribution {
    pub fn new(means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        let dist = LatentDistribution { means, stds };
        dist.validate()?;
        Ok(dist)
    }

    pub fn validate(&self) -> Result<()> {
        if self.means.len() != self.stds.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} stds", self.means.len()),
                actual: format!("{}", self.stds.len()),
            });
        }
        if !self.means.iter().chain(&self.stds).all(|v| v.is_finite()) {
            return Err(Error::Precondition("latent distribution must be finite".into()));
        }
        if self.stds.iter().any(|&s| s <= 0.0) {
            return Err(Error::Precondition("stds must be strictly positive".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
}

/// `z = mu + sigma * eps` elementwise.
pub fn reparameterise(dist: &LatentDistribution, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != dist.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("noise of length {}", dist.len()),
            actual: format!("{}", noise.len()),
        });
    }
    Ok(dist
        .means
        .iter()
        .zip(&dist.stds)
        .zip(noise)
        .map(|((m, s), e)| m + s * e)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Vae,
    BetaVae,
    AdaGvae,
    BetaTvae,
    AdaTvae,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Vae,
        ModelKind::BetaVae,
        ModelKind::AdaGvae,
        ModelKind::BetaTvae,
        ModelKind::AdaTvae,
    ];

    pub fn is_triplet(self) -> bool {
        matches!(self, ModelKind::BetaTvae | ModelKind::AdaTvae)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Vae => "vae",
            ModelKind::BetaVae => "beta_vae",
            ModelKind::AdaGvae => "ada_gvae",
            ModelKind::BetaTvae => "beta_tvae",
            ModelKind::AdaTvae => "ada_tvae",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind '{s}'")))
    }
}

/// Distance used between latent vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentDistance {
    L1,
    L2,
}

/// Loss hyperparameters shared by all model kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub model_kind: ModelKind,
    /// Regularisation coefficient, >= 0. 1 recovers the plain VAE.
    pub beta: f64,
    /// Triplet scaling, > 0.
    pub alpha: f64,
    pub latent_dim: usize,
    /// Weight applied to shared latent units in the adaptive triplet, in
    /// (0, 1).
    pub shared_weight: f64,
    pub latent_distance: LatentDistance,
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta < 0.0 {
            return Err(Error::Config("beta must be >= 0".into()));
        }
        if self.alpha <= 0.0 {
            return Err(Error::Config("alpha must be > 0".into()));
        }
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be >= 1".into()));
        }
        if !(0.0 < self.shared_weight && self.shared_weight < 1.0) {
            return Err(Error::Config("shared_weight must be in (0, 1)".into()));
        }
        Ok(())
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            model_kind: ModelKind::BetaVae,
            beta: 4.0,
            alpha: 1.0,
            latent_dim: 9,
            shared_weight: 0.5,
            latent_distance: LatentDistance::L1,
        }
    }
}

/// Network architecture knobs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Output channels of each conv stage (stride 2 each).
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub dense_hidden: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig { conv_channels: vec![32, 32, 64, 64], kernel: 4, dense_hidden: 256 }
    }
}

const CONV_STRIDE: usize = 2;
const CONV_PADDING: usize = 1;

#[derive(Debug, Clone)]
struct ConvEncoder {
    convs: Vec<Conv2d>,
    fc: Dense,
    mean_head: Dense,
    logstd_head: Dense,
    flat_dim: usize,
}

#[derive(Debug, Clone)]
struct ConvDecoder {
    fc1: Dense,
    fc2: Dense,
    deconvs: Vec<ConvTranspose2d>,
    base_channels: usize,
    base_side: usize,
}

pub(crate) struct EncoderCache {
    conv_cols: Vec<ndarray::Array2<f64>>,
    conv_outs: Vec<Array3<f64>>,
    flat: Vec<f64>,
    hidden: Vec<f64>,
}

pub(crate) struct DecoderCache {
    z: Vec<f64>,
    h1: Vec<f64>,
    flat: Vec<f64>,
    deconv_ins: Vec<Array3<f64>>,
    outs: Vec<Array3<f64>>,
}

/// Encoder/decoder pair with all parameters in `params`.
#[derive(Debug, Clone)]
pub struct LatentModel {
    pub image_channels: usize,
    pub image_side: usize,
    pub latent_dim: usize,
    pub arch: ArchConfig,
    encoder: ConvEncoder,
    decoder: ConvDecoder,
    pub params: Vec<f64>,
}

impl LatentModel {
    /// Build and randomly initialise a model for `image_side` x
    /// `image_side` images with `image_channels` channels.
    ///
    /// Every conv stage halves the spatial side, so each intermediate side
    /// must be even for the decoder to mirror exactly.
    pub fn new(
        image_channels: usize,
        image_side: usize,
        latent_dim: usize,
        arch: &ArchConfig,
        seed: u64,
    ) -> Result<Self> {
        if arch.conv_channels.is_empty() {
            return Err(Error::Config("need at least one conv stage".into()));
        }
        if latent_dim == 0 {
            return Err(Error::Config("latent_dim must be >= 1".into()));
        }
        // Spatial chain.
        let mut side = image_side;
        for (i, _) in arch.conv_channels.iter().enumerate() {
            if side % 2 != 0 || side < 2 {
                return Err(Error::Config(format!(
                    "conv stage {i} sees side {side}; every stage needs an even side (pad the image)"
                )));
            }
            side /= 2;
        }
        let base_side = side;
        let base_channels = *arch.conv_channels.last().expect("non-empty");
        let flat_dim = base_channels * base_side * base_side;

        let mut alloc = ParamAlloc::new();
        let mut convs = Vec::new();
        let mut in_ch = image_channels;
        let mut in_side = image_side;
        for &out_ch in &arch.conv_channels {
            let conv = Conv2d::new(&mut alloc, in_ch, out_ch, arch.kernel, CONV_STRIDE, CONV_PADDING, in_side);
            in_side = conv.out_side;
            in_ch = out_ch;
            convs.push(conv);
        }
        let fc = Dense::new(&mut alloc, flat_dim, arch.dense_hidden);
        let mean_head = Dense::new(&mut alloc, arch.dense_hidden, latent_dim);
        let logstd_head = Dense::new(&mut alloc, arch.dense_hidden, latent_dim);
        let encoder = ConvEncoder { convs, fc, mean_head, logstd_head, flat_dim };

        let fc1 = Dense::new(&mut alloc, latent_dim, arch.dense_hidden);
        let fc2 = Dense::new(&mut alloc, arch.dense_hidden, flat_dim);
        let mut deconvs = Vec::new();
        let mut in_ch = base_channels;
        let mut in_side = base_side;
        let n = arch.conv_channels.len();
        for i in 0..n {
            let out_ch = if i + 1 == n { image_channels } else { arch.conv_channels[n - 2 - i] };
            let deconv =
                ConvTranspose2d::new(&mut alloc, in_ch, out_ch, arch.kernel, CONV_STRIDE, CONV_PADDING, in_side);
            in_side = deconv.out_side;
            in_ch = out_ch;
            deconvs.push(deconv);
        }
        debug_assert_eq!(in_side, image_side);
        let decoder = ConvDecoder { fc1, fc2, deconvs, base_channels, base_side };

        let mut params = vec![0.0; alloc.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for conv in &encoder.convs {
            conv.init(&mut params, 2.0, &mut rng);
        }
        encoder.fc.init(&mut params, 2.0, &mut rng);
        encoder.mean_head.init(&mut params, 1.0, &mut rng);
        // Log-std head starts at zero: fresh models emit stds of exactly 1.
        encoder.logstd_head.init(&mut params, 0.0, &mut rng);
        decoder.fc1.init(&mut params, 2.0, &mut rng);
        decoder.fc2.init(&mut params, 2.0, &mut rng);
        for (i, deconv) in decoder.deconvs.iter().enumerate() {
            let gain = if i + 1 == decoder.deconvs.len() { 1.0 } else { 2.0 };
            deconv.init(&mut params, gain, &mut rng);
        }

        Ok(LatentModel {
            image_channels,
            image_side,
            latent_dim,
            arch: arch.clone(),
            encoder,
            decoder,
            params,
        })
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// SHA-256 over the little-endian parameter bytes; used to assert the
    /// freeze contract during downstream RL.
    pub fn params_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for p in &self.params {
            hasher.update(p.to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }

    pub fn check_observation(&self, obs: &Observation) -> Result<()> {
        let expected = (self.image_channels, self.image_side, self.image_side);
        if obs.dim() != expected {
            return Err(Error::ShapeMismatch {
                expected: format!("{expected:?}"),
                actual: format!("{:?}", obs.dim()),
            });
        }
        Ok(())
    }

    /// Posterior parameters for one observation. Stds come from an
    /// exponential map of the raw log-std head, so they are always
    /// positive.
    pub fn encode(&self, obs: &Observation) -> Result<LatentDistribution> {
        self.check_observation(obs)?;
        let (means, logstds, _) = self.encode_forward(&self.params, obs);
        LatentDistribution::new(means, logstds.iter().map(|l| l.exp()).collect())
    }

    /// Decode a latent vector into an image reconstruction.
    pub fn decode(&self, z: &[f64]) -> Result<Observation> {
        if z.len() != self.latent_dim {
            return Err(Error::ShapeMismatch {
                expected: format!("latent of length {}", self.latent_dim),
                actual: format!("{}", z.len()),
            });
        }
        let (recon, _) = self.decode_forward(&self.params, z);
        Ok(recon)
    }

    pub(crate) fn encode_forward(
        &self,
        params: &[f64],
        obs: &Observation,
    ) -> (Vec<f64>, Vec<f64>, EncoderCache) {
        let enc = &self.encoder;
        let mut conv_cols = Vec::with_capacity(enc.convs.len());
        let mut conv_outs = Vec::with_capacity(enc.convs.len());
        let mut current = obs.clone();
        for conv in &enc.convs {
            let (mut y, cols) = conv.forward(params, &current);
            crate::nn::relu_inplace(y.as_slice_mut().expect("contiguous"));
            conv_cols.push(cols);
            conv_outs.push(y.clone());
            current = y;
        }
        let flat: Vec<f64> = current.iter().copied().collect();
        debug_assert_eq!(flat.len(), enc.flat_dim);
        let mut hidden = enc.fc.forward(params, &flat);
        crate::nn::relu_inplace(&mut hidden);
        let means = enc.mean_head.forward(params, &hidden);
        let logstds = enc.logstd_head.forward(params, &hidden);
        (means, logstds, EncoderCache { conv_cols, conv_outs, flat, hidden })
    }

    pub(crate) fn encode_backward(
        &self,
        params: &[f64],
        grads: &mut [f64],
        cache: &EncoderCache,
        d_means: &[f64],
        d_logstds: &[f64],
    ) {
        let enc = &self.encoder;
        let dh_mean = enc.mean_head.backward(params, grads, &cache.hidden, d_means);
        let dh_logstd = enc.logstd_head.backward(params, grads, &cache.hidden, d_logstds);
        let mut d_hidden: Vec<f64> =
            dh_mean.iter().zip(&dh_logstd).map(|(a, b)| a + b).collect();
        crate::nn::relu_backward_inplace(&mut d_hidden, &cache.hidden);
        let mut d_flat = enc.fc.backward(params, grads, &cache.flat, &d_hidden);
        crate::nn::relu_backward_inplace(&mut d_flat, &cache.flat);
        let last = enc.convs.len() - 1;
        let mut dy = Array3::from_shape_vec(conv_out_dim(&enc.convs[last]), d_flat).expect("reshape");
        for i in (0..enc.convs.len()).rev() {
            let conv = &enc.convs[i];
            if i < last {
                // Gate by this conv's post-ReLU output.
                let out = &cache.conv_outs[i];
                ndarray::Zip::from(&mut dy).and(out).for_each(|d, &o| {
                    if o <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            let dx = conv.backward(params, grads, &cache.conv_cols[i], &dy);
            dy = dx;
        }
        // dy is now the gradient w.r.t. the input image; discarded.
    }

    pub(crate) fn decode_forward(&self, params: &[f64], z: &[f64]) -> (Observation, DecoderCache) {
        let dec = &self.decoder;
        let mut h1 = dec.fc1.forward(params, z);
        crate::nn::relu_inplace(&mut h1);
        let mut flat = dec.fc2.forward(params, &h1);
        crate::nn::relu_inplace(&mut flat);
        let mut current =
            Array3::from_shape_vec((dec.base_channels, dec.base_side, dec.base_side), flat.clone())
                .expect("reshape");
        let mut deconv_ins = Vec::with_capacity(dec.deconvs.len());
        let mut outs = Vec::with_capacity(dec.deconvs.len());
        let n = dec.deconvs.len();
        for (i, deconv) in dec.deconvs.iter().enumerate() {
            deconv_ins.push(current.clone());
            let mut y = deconv.forward(params, &current);
            if i + 1 == n {
                y.mapv_inplace(crate::nn::sigmoid);
            } else {
                crate::nn::relu_inplace(y.as_slice_mut().expect("contiguous"));
            }
            outs.push(y.clone());
            current = y;
        }
        let recon = outs.last().expect("at least one deconv").clone();
        (recon, DecoderCache { z: z.to_vec(), h1, flat, deconv_ins, outs })
    }

    /// Backprop `d_recon` through the decoder; accumulates parameter
    /// gradients and returns `d_z`.
    pub(crate) fn decode_backward(
        &self,
        params: &[f64],
        grads: &mut [f64],
        cache: &DecoderCache,
        d_recon: &Array3<f64>,
    ) -> Vec<f64> {
        let dec = &self.decoder;
        let n = dec.deconvs.len();
        // Sigmoid backward on the final output.
        let recon = &cache.outs[n - 1];
        let mut dy = d_recon.clone();
        ndarray::Zip::from(&mut dy).and(recon).for_each(|d, &y| {
            *d *= y * (1.0 - y);
        });
        for i in (0..n).rev() {
            let deconv = &dec.deconvs[i];
            let mut dx = deconv.backward(params, grads, &cache.deconv_ins[i], &dy);
            if i > 0 {
                let prev_out = &cache.outs[i - 1];
                ndarray::Zip::from(&mut dx).and(prev_out).for_each(|d, &o| {
                    if o <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            dy = dx;
        }
        let mut d_flat: Vec<f64> = dy.iter().copied().collect();
        crate::nn::relu_backward_inplace(&mut d_flat, &cache.flat);
        let mut d_h1 = dec.fc2.backward(params, grads, &cache.h1, &d_flat);
        crate::nn::relu_backward_inplace(&mut d_h1, &cache.h1);
        dec.fc1.backward(params, grads, &cache.z, &d_h1)
    }
}

fn conv_out_dim(conv: &Conv2d) -> (usize, usize, usize) {
    (conv.out_ch, conv.out_side, conv.out_side)
}

impl LatentMap for LatentModel {
    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn encode_states(&self, spec: &GridSpec, states: &[FactorState]) -> Result<Vec<Vec<f64>>> {
        let results = crate::exec::map(states, |state| {
            let obs = crate::gridworld::render(state, spec)?;
            Ok(self.encode(&obs)?.means)
        });
        results.into_iter().collect()
    }
}

#[allow(dead_code)]
fn as_view(v: &[f64]) -> ArrayView1<'_, f64> {
    ArrayView1::from(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{render, FactorState, GridSpec};

    fn tiny_model() -> LatentModel {
        let arch = ArchConfig { conv_channels: vec![4, 8], kernel: 4, dense_hidden: 16 };
        LatentModel::new(1, 8, 2, &arch, 0).unwrap()
    }

    #[test]
    fn fresh_model_emits_unit_stds() {
        let model = tiny_model();
        let spec = GridSpec::new(1, 4, 4, 2, 8).unwrap();
        let obs = render(&FactorState::single(1, 0), &spec).unwrap();
        let dist = model.encode(&obs).unwrap();
        assert_eq!(dist.len(), 2);
        for s in &dist.stds {
            assert!((s - 1.0).abs() < 1e-12, "std {s}");
        }
    }

    #[test]
    fn encode_is_deterministic_and_shaped() {
        let model = tiny_model();
        let spec = GridSpec::new(1, 4, 4, 2, 8).unwrap();
        let obs = render(&FactorState::single(0, 1), &spec).unwrap();
        let a = model.encode(&obs).unwrap();
        let b = model.encode(&obs).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.means.len(), model.latent_dim);
        assert_eq!(a.stds.len(), model.latent_dim);
    }

    #[test]
    fn encode_rejects_wrong_shape() {
        let model = tiny_model();
        let obs = Observation::zeros((1, 16, 16));
        assert!(matches!(model.encode(&obs), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn decode_output_shape_and_range() {
        let model = tiny_model();
        let img = model.decode(&[0.3, -0.8]).unwrap();
        assert_eq!(img.dim(), (1, 8, 8));
        assert!(img.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn odd_intermediate_side_rejected() {
        let arch = ArchConfig { conv_channels: vec![4, 8], kernel: 4, dense_hidden: 16 };
        // 10 -> 5 (odd) -> second stage must fail.
        assert!(LatentModel::new(1, 10, 2, &arch, 0).is_err());
    }

    #[test]
    fn reparameterise_examples() {
        let d = LatentDistribution::new(vec![1.0, 2.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(reparameterise(&d, &[0.0, 0.0]).unwrap(), vec![1.0, 2.0]);
        let d = LatentDistribution::new(vec![0.0, 0.0], vec![2.0, 3.0]).unwrap();
        assert_eq!(reparameterise(&d, &[1.0, -1.0]).unwrap(), vec![2.0, -3.0]);
        assert!(reparameterise(&d, &[1.0]).is_err());
    }

    /// d z / d mu is the identity for fixed noise (checked by finite
    /// differences on the reparameterisation alone).
    #[test]
    fn reparameterise_gradient_wrt_mean_is_identity() {
        let noise = [0.7, -0.2];
        let stds = [1.3, 0.4];
        let eps = 1e-6;
        for i in 0..2 {
            for j in 0..2 {
                let mut mu = [0.5, -0.1];
                mu[j] += eps;
                let up = reparameterise(
                    &LatentDistribution::new(mu.to_vec(), stds.to_vec()).unwrap(),
                    &noise,
                )
                .unwrap()[i];
                mu[j] -= 2.0 * eps;
                let dn = reparameterise(
                    &LatentDistribution::new(mu.to_vec(), stds.to_vec()).unwrap(),
                    &noise,
                )
                .unwrap()[i];
                let fd = (up - dn) / (2.0 * eps);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((fd - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn params_hash_tracks_content() {
        let a = tiny_model();
        let mut b = a.clone();
        assert_eq!(a.params_hash(), b.params_hash());
        b.params[0] += 1e-9;
        assert_ne!(a.params_hash(), b.params_hash());
    }
}
