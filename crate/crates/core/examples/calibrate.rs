//! Quick calibration harness: trains selected model kinds on one grid
//! setting and prints MIG / rank-correlation / timing, so training
//! hyperparameters can be tuned without running the whole suite.
//!
//! Usage:
//!   cargo run --release -p gridvae --example calibrate -- \
//!     <model_kind> <step_px> <seed> [steps] [beta] [alpha] [cells] [batch]

use std::time::Instant;

use gridvae::buffer::{collect_random_walk, SamplerConfig, SamplerMode};
use gridvae::gridworld::{enumerate_states, GridSpec, DEFAULT_STATE_CAP};
use gridvae::latentmodel::{
    train, ArchConfig, LatentDistance, LatentModel, LossConfig, ModelKind, TrainConfig,
};
use gridvae::metrics::{distance_rank_correlation, mig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let kind: ModelKind = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(ModelKind::BetaVae);
    let step_px: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(8);
    let seed: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0);
    let steps: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(1200);
    let beta: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(4.0);
    let alpha: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(10.0);
    let cells: usize = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(5);
    let batch: usize = args.get(8).map(|s| s.parse().unwrap()).unwrap_or(8);
    let supervision = if std::env::var("GT").is_ok() {
        SamplerMode::GroundTruth
    } else {
        SamplerMode::Temporal
    };

    let image = (cells - 1) * 8 + 8;
    let spec = GridSpec::new(1, 8, step_px, cells, image).unwrap();
    let buffer = collect_random_walk(&spec, 8, 256, seed * 1000 + 1).unwrap();
    let arch = ArchConfig { conv_channels: vec![8, 16, 32], kernel: 4, dense_hidden: 96 };
    let loss = LossConfig {
        model_kind: kind,
        beta,
        alpha,
        latent_dim: std::env::var("LATENT").ok().and_then(|s| s.parse().ok()).unwrap_or(9),
        shared_weight: 0.5,
        latent_distance: LatentDistance::L1,
    };
    let sampler = SamplerConfig { max_positive_offset: 8, max_negative_offset: 32, mode: supervision };
    let train_cfg = TrainConfig { steps, batch_size: batch, ..Default::default() };
    let mut model = LatentModel::new(1, image, loss.latent_dim, &arch, seed * 7 + 3).unwrap();

    let t0 = Instant::now();
    let out = train(&mut model, &buffer, &loss, &sampler, &train_cfg, seed * 13 + 5, None).unwrap();
    let train_secs = t0.elapsed().as_secs_f64();

    let first = &out.loss_curve[..10.min(out.loss_curve.len())];
    let last = &out.loss_curve[out.loss_curve.len().saturating_sub(10)..];
    let mean = |xs: &[gridvae::latentmodel::LossBreakdown]| {
        let n = xs.len() as f64;
        (
            xs.iter().map(|l| l.total).sum::<f64>() / n,
            xs.iter().map(|l| l.recon).sum::<f64>() / n,
            xs.iter().map(|l| l.kl).sum::<f64>() / n,
            xs.iter().map(|l| l.triplet).sum::<f64>() / n,
        )
    };
    let (t_i, r_i, k_i, tr_i) = mean(first);
    let (t_f, r_f, k_f, tr_f) = mean(last);

    let mig_samples: usize = std::env::var("MIG_SAMPLES").ok().and_then(|s| s.parse().ok()).unwrap_or(4000);
    let mig_bins: usize = std::env::var("MIG_BINS").ok().and_then(|s| s.parse().ok()).unwrap_or(20);
    let t1 = Instant::now();
    let report = mig(&model, &spec, mig_bins, mig_samples, 99).unwrap();
    let states = enumerate_states(&spec, DEFAULT_STATE_CAP).unwrap();
    let rc = distance_rank_correlation(&model, &spec, &states, LatentDistance::L1, 2000, 17);
    let eval_secs = t1.elapsed().as_secs_f64();

    println!(
        "kind={kind} step={step_px} seed={seed} steps={steps} beta={beta} alpha={alpha} cells={cells} batch={batch} sup={supervision:?}"
    );
    println!("  loss  first10: total={t_i:.1} recon={r_i:.1} kl={k_i:.2} trip={tr_i:.3}");
    println!("  loss  last10 : total={t_f:.1} recon={r_f:.1} kl={k_f:.2} trip={tr_f:.3}");
    println!(
        "  mig={:.4} rank_corr={} train_s={train_secs:.1} eval_s={eval_secs:.1}",
        report.mig_score,
        rc.map(|v| format!("{v:.4}")).unwrap_or_else(|e| format!("err({e})")),
    );
}
