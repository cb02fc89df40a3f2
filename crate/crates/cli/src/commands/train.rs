use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde::Serialize;

use bsi_core::predictor::{FeatureConfig, PredictorSpec};
use bsi_core::trainer::{save_checkpoint, train_with, TrainConfig, METRICS_HEADER};

use crate::common::{create, sibling, usage, write_manifest, CliResult, DatasetArgs};

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, default_value_t = 1000)]
    pub steps: u64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub wd: f64,
    #[arg(long, default_value_t = 0)]
    pub warmup: u64,
    #[arg(long, default_value_t = 0.9999)]
    pub ema_beta: f64,
    #[arg(long, default_value_t = 1000)]
    pub ema_start: u64,
    #[arg(long, default_value_t = 0.01)]
    pub lambda0: f64,
    #[arg(long, default_value_t = 1e6)]
    pub alpha_m: f64,
    /// Output precision stored for evaluation; defaults to 2 * alpha_m
    #[arg(long)]
    pub alpha_r: Option<f64>,
    #[arg(long, default_value_t = 128)]
    pub mlp_width: usize,
    #[arg(long, default_value_t = 3)]
    pub mlp_depth: usize,
    #[arg(long, default_value_t = 6, allow_negative_numbers = true)]
    pub fourier_min: i32,
    #[arg(long, default_value_t = 8, allow_negative_numbers = true)]
    pub fourier_max: i32,
    #[arg(long, default_value_t = 32)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint path; metrics go to <out>.metrics.csv
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let started = Instant::now();
    let (_, data) = args.data.load()?;
    let features = FeatureConfig {
        n_min: args.fourier_min,
        n_max: args.fourier_max,
        embed_dim: args.embed_dim,
        ..FeatureConfig::default()
    };
    let spec = PredictorSpec {
        features,
        ..PredictorSpec::mlp(
            data.dim(),
            args.mlp_width,
            args.mlp_depth,
            args.lambda0,
            args.lambda0 + args.alpha_m,
        )
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let cfg = TrainConfig {
        batch_size: args.batch,
        steps: args.steps,
        learning_rate: args.lr,
        weight_decay: args.wd,
        ema_beta: args.ema_beta,
        ema_start_step: args.ema_start,
        seed: args.seed,
        warmup_steps: args.warmup,
        alpha_r: args.alpha_r,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let metrics_path = sibling(&args.out, "metrics.csv");
    let mut metrics = create(&metrics_path)?;
    writeln!(metrics, "{METRICS_HEADER}")?;
    let mut write_err = None;
    let ckpt = train_with(&data.continuous, &spec, &cfg, |m| {
        if let Err(e) = writeln!(metrics, "{}", m.csv_row()) {
            write_err.get_or_insert(e);
        }
    });
    metrics.flush()?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    let ckpt = ckpt?;
    save_checkpoint(&args.out, &ckpt)?;

    #[derive(Serialize)]
    struct Resolved<'a> {
        args: &'a TrainArgs,
        predictor: &'a PredictorSpec,
        train: &'a TrainConfig,
    }
    write_manifest(
        &args.out,
        "train",
        &Resolved {
            args,
            predictor: &spec,
            train: &cfg,
        },
        &[&args.out, &metrics_path],
        &args.data.input_files(),
        None,
        started,
    )?;
    Ok(())
}
