//! `train-toy`: DSM training on a toy dataset, then sampling.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scenforge_core::io;
use scenforge_diffusion::check::moments;
use scenforge_diffusion::edm::{sample, SigmaSchedule};
use scenforge_diffusion::toy::{train, ToyDataset, ToyDenoiser, TrainConfig, Trained};
use serde::Serialize;

use crate::UsageError;

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.02)]
    pub lr: f64,
    #[arg(long, default_value_t = 1024)]
    pub batch: usize,
    #[arg(long, default_value_t = ToyDenoiser::DEFAULT_HIDDEN)]
    pub hidden: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Draws used for the sample moments.
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    /// JSON dataset (`{"kind": "gaussian", "mu": [...], "s": ...}`); `N((3, −1), 0.5²)` when unset.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Writes `loss.csv`, `params.json` and `summary.json` here.
    #[arg(long, default_value = "toy-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToySummary {
    pub steps: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// `1 − final/initial`.
    pub reduction: f64,
    pub sample_mean: Vec<f64>,
    pub sample_std: Vec<f64>,
    pub samples: usize,
}

/// Trains with seed `seed` and samples with seed `seed + 1`.
pub fn train_and_sample(dataset: &ToyDataset, config: &TrainConfig, seed: u64, samples: usize) -> anyhow::Result<(Trained, ToySummary)> {
    let trained = train(dataset, config, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let schedule = SigmaSchedule::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let draws = (0..samples).map(|_| sample(&trained.model, &schedule, dataset.dim(), &mut rng)).collect::<Result<Vec<_>, _>>()?;
    let (mean, cov) = moments(&draws);
    let (initial, last) = (trained.losses[0], *trained.losses.last().expect("at least one loss"));
    let summary = ToySummary {
        steps: config.steps,
        initial_loss: initial,
        final_loss: last,
        reduction: 1.0 - last / initial,
        sample_std: (0..mean.len()).map(|i| cov[i][i].sqrt()).collect(),
        sample_mean: mean,
        samples,
    };
    Ok((trained, summary))
}

pub fn cmd_train_toy(args: &TrainToyArgs) -> anyhow::Result<i32> {
    if args.samples == 0 {
        return Err(UsageError("--samples must be at least 1".into()).into());
    }
    let dataset = match &args.dataset {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| UsageError(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| UsageError(format!("invalid dataset {}: {e}", p.display())))?
        }
        None => ToyDataset::default(),
    };
    let config = TrainConfig { steps: args.steps, learning_rate: args.lr, batch: args.batch, hidden: args.hidden, ..TrainConfig::default() };
    let (trained, summary) = train_and_sample(&dataset, &config, args.seed, args.samples).context("training failed")?;

    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut csv = String::from("step,loss\n");
    for (i, l) in trained.losses.iter().enumerate() {
        let _ = writeln!(csv, "{i},{l}");
    }
    io::write_atomic(&args.out.join("loss.csv"), csv.as_bytes())?;
    io::write_json(&args.out.join("params.json"), &trained.model)?;
    io::write_json(&args.out.join("summary.json"), &summary)?;
    println!(
        "loss {:.4} -> {:.4} ({:.1}% lower); sample mean {:.3?}, std {:.3?} over {} draws -> {}",
        summary.initial_loss,
        summary.final_loss,
        100.0 * summary.reduction,
        summary.sample_mean,
        summary.sample_std,
        summary.samples,
        args.out.display()
    );
    Ok(0)
}
