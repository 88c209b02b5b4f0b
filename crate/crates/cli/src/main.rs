//! Command-line front end: data generation, training, evaluation, the
//! spacing sweep, model comparison, downstream RL and report rendering.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use gridvae::buffer::{collect_random_walk, ReplayBuffer};
use gridvae::experiments::{
    run_model_comparison, run_overlap_sweep, run_rl_evaluation, write_report, ExperimentConfig,
};
use gridvae::latentmodel::{load_checkpoint, train, LatentModel};
use gridvae::metrics::{
    distance_rank_correlation, mig, traversal_distance_matrix, DistanceKind,
};

#[derive(Parser)]
#[command(name = "gridvae", version, about = "Gridworld representation-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment config file (TOML); defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    output: Option<String>,
    /// Override a config field by dotted path, e.g. --set loss.beta=4.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl CommonArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        ExperimentConfig::load(
            self.config.as_deref(),
            &self.sets,
            self.seed,
            self.output.as_deref(),
        )
        .context("loading experiment config")
    }
}

#[derive(Subcommand)]
enum Command {
    /// Collect a random-walk replay buffer and save it.
    GenerateData(CommonArgs),
    /// Train one model (kind taken from the config) on a replay buffer.
    Train(CommonArgs),
    /// Evaluate a checkpoint: MIG, rank correlation and traversal
    /// heatmaps.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint to evaluate; defaults to the one `train` writes.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train beta-VAE and Ada-GVAE across spacings and plot MIG vs
    /// spacing.
    SweepOverlap(CommonArgs),
    /// Train all compared models and plot distance rank correlations.
    CompareModels(CommonArgs),
    /// DQN over the frozen encoders from compare-models.
    RlEval(CommonArgs),
    /// Regenerate results.csv and figures from stored records.
    Report(CommonArgs),
}

fn buffer_path(cfg: &ExperimentConfig) -> PathBuf {
    Path::new(&cfg.output_dir).join("buffer.buf")
}

fn train_checkpoint_base(cfg: &ExperimentConfig) -> PathBuf {
    Path::new(&cfg.output_dir)
        .join("checkpoints")
        .join(format!("train_{}_seed{}", cfg.loss.model_kind, cfg.seeds[0]))
}

fn load_or_collect_buffer(cfg: &ExperimentConfig) -> anyhow::Result<ReplayBuffer> {
    let path = buffer_path(cfg);
    if path.exists() {
        let buf = ReplayBuffer::load(&path).context("loading replay buffer")?;
        if buf.spec() != &cfg.grid {
            bail!(
                "buffer at {} was collected under a different grid spec; re-run generate-data",
                path.display()
            );
        }
        return Ok(buf);
    }
    Ok(collect_random_walk(&cfg.grid, cfg.data.episodes, cfg.data.steps_per_episode, cfg.seeds[0])?)
}

fn cmd_generate_data(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let buf = collect_random_walk(&cfg.grid, cfg.data.episodes, cfg.data.steps_per_episode, cfg.seeds[0])?;
    let path = buffer_path(cfg);
    buf.save(&path)?;
    println!(
        "wrote {} transitions across {} episodes to {}",
        buf.len(),
        buf.num_episodes(),
        path.display()
    );
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let buffer = load_or_collect_buffer(cfg)?;
    let mut model = LatentModel::new(
        cfg.grid.channels(),
        cfg.grid.image_side_px,
        cfg.loss.latent_dim,
        &cfg.model,
        cfg.seeds[0],
    )?;
    let base = train_checkpoint_base(cfg);
    let out = train(
        &mut model,
        &buffer,
        &cfg.loss,
        &cfg.sampler,
        &cfg.train,
        cfg.seeds[0],
        Some(&base),
    )?;
    let last = out.loss_curve.last().map(|l| l.total).unwrap_or(f64::NAN);
    println!(
        "trained {} for {} steps (final loss {:.4}); checkpoint at {}.ckpt",
        cfg.loss.model_kind,
        cfg.train.steps,
        last,
        base.display()
    );
    Ok(())
}

fn cmd_evaluate(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> anyhow::Result<()> {
    let default_base = train_checkpoint_base(cfg).with_extension("ckpt");
    let path = checkpoint.unwrap_or(&default_base);
    if !path.exists() {
        bail!("checkpoint {} does not exist; run `gridvae train` first", path.display());
    }
    let (model, loss_cfg, step) = load_checkpoint(path)?;
    println!("loaded checkpoint at step {step} ({})", loss_cfg.model_kind);
    let out_dir = Path::new(&cfg.output_dir);
    std::fs::create_dir_all(out_dir.join("figures"))?;

    let mut rows = Vec::new();
    for metric in &cfg.eval.metrics {
        match metric.as_str() {
            "mig" => {
                let report = mig(&model, &cfg.grid, cfg.eval.mig_bins, cfg.eval.mig_samples, cfg.seeds[0])?;
                println!("mig = {:.4}", report.mig_score);
                if !report.excluded_factors.is_empty() {
                    eprintln!(
                        "warning: factors {:?} excluded from MIG (zero entropy)",
                        report.excluded_factors
                    );
                }
                rows.push(("mig".to_string(), report.mig_score));
            }
            "rank_correlation" => {
                let states = gridvae::gridworld::enumerate_states(
                    &cfg.grid,
                    gridvae::gridworld::DEFAULT_STATE_CAP,
                )?;
                match distance_rank_correlation(
                    &model,
                    &cfg.grid,
                    &states,
                    loss_cfg.latent_distance,
                    cfg.eval.rank_pairs,
                    cfg.seeds[0],
                ) {
                    Ok(rc) => {
                        println!("rank_correlation = {rc:.4}");
                        rows.push(("rank_correlation".to_string(), rc));
                    }
                    Err(gridvae::Error::Degenerate(why)) => {
                        println!("rank_correlation undefined: {why}");
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            "traversal" => {
                for (kind, name) in [
                    (DistanceKind::GroundTruth, "traversal_ground_truth"),
                    (DistanceKind::Perceived, "traversal_perceived"),
                    (DistanceKind::Latent, "traversal_latent"),
                ] {
                    let m = traversal_distance_matrix(
                        &cfg.grid,
                        0,
                        kind,
                        Some((&model, loss_cfg.latent_distance)),
                    )?;
                    let fig = out_dir.join("figures").join(format!("{name}.png"));
                    gridvae::experiments::figures::heatmap(&m.values, &fig)?;
                    println!("wrote {}", fig.display());
                }
            }
            other => bail!("unknown metric '{other}'"),
        }
    }

    let csv_path = out_dir.join("evaluation.csv");
    let mut csv = String::from("metric_name,value\n");
    for (name, value) in rows {
        csv.push_str(&format!("{name},{value}\n"));
    }
    std::fs::write(&csv_path, csv)?;
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenerateData(c) => c.load().and_then(|cfg| cmd_generate_data(&cfg)),
        Command::Train(c) => c.load().and_then(|cfg| cmd_train(&cfg)),
        Command::Evaluate { common, checkpoint } => common
            .load()
            .and_then(|cfg| cmd_evaluate(&cfg, checkpoint.as_deref())),
        Command::SweepOverlap(c) => c.load().and_then(|cfg| {
            let out = run_overlap_sweep(&cfg)?;
            for (model, slope) in &out.mig_slopes {
                println!("{model}: fitted MIG slope vs spacing = {slope:.4}");
            }
            println!("results at {}", out.results_csv.display());
            Ok(())
        }),
        Command::CompareModels(c) => c.load().and_then(|cfg| {
            let out = run_model_comparison(&cfg)?;
            for ((model, sup), mean) in &out.mean_rank_correlation {
                println!("{model} [{sup}]: mean rank correlation = {mean:.4}");
            }
            println!("results at {}", out.results_csv.display());
            Ok(())
        }),
        Command::RlEval(c) => c.load().and_then(|cfg| {
            let out = run_rl_evaluation(&cfg)?;
            for (model, ret) in &out.final_returns {
                println!("{model}: final-window mean return = {ret:.2}");
            }
            println!("curves at {}", out.curves_csv.display());
            Ok(())
        }),
        Command::Report(c) => c.load().and_then(|cfg| {
            let csv = write_report(&cfg)?;
            println!("report written; results at {}", csv.display());
            Ok(())
        }),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
