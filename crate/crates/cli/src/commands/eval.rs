use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde::Serialize;

use bsi_core::elbo::{bpd, ElboSetup, EvalConfig, EvalReport, ReconConfig};
use bsi_core::predictor::Predictor;

use crate::common::{create, read_checkpoint, usage, write_manifest, CliResult, DatasetArgs};

pub const REPORT_HEADER: &str = "bpd,lm_nats,lm_se,lr_nats,lr_se,n,num_samples,mc_measure,mc_recon";

pub fn report_row(r: &EvalReport) -> String {
    format!(
        "{:?},{:?},{:?},{:?},{:?},{},{},{},{}",
        r.bpd,
        r.lm_estimate,
        r.lm_std_error,
        r.lr_discretized,
        r.lr_std_error,
        r.dim,
        r.num_samples,
        r.num_mc_measure,
        r.num_mc_recon
    )
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, default_value_t = 5)]
    pub mc_measure: usize,
    #[arg(long, default_value_t = 2)]
    pub mc_recon: usize,
    /// Overrides the checkpoint's output precision
    #[arg(long)]
    pub alpha_r: Option<f64>,
    #[arg(long)]
    pub raw: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &EvalArgs) -> CliResult<()> {
    let started = Instant::now();
    if args.mc_measure == 0 || args.mc_recon == 0 {
        return Err(usage("--mc-measure and --mc-recon must be at least 1"));
    }
    let ckpt = read_checkpoint(&args.ckpt)?;
    let (_, data) = args.data.load()?;
    if data.dim() != ckpt.spec.dim {
        return Err(usage(format!(
            "dataset has {} dimensions, checkpoint expects {}",
            data.dim(),
            ckpt.spec.dim
        )));
    }
    let params = if args.raw { &ckpt.params } else { &ckpt.ema };
    let pred = Predictor::new(&ckpt.spec, params)?;
    let setup = ElboSetup::bsi(ckpt.lambda0, ckpt.lambda_m)?;
    let recon = ReconConfig::new(args.alpha_r.unwrap_or(ckpt.alpha_r), data.r)
        .map_err(|e| usage(e.to_string()))?;
    let cfg = EvalConfig {
        num_mc_measure: args.mc_measure,
        num_mc_recon: args.mc_recon,
        seed: args.seed,
        ..EvalConfig::default()
    };
    let report = bpd(&pred, &data, &setup, &recon, &cfg)?;

    let mut w = create(&args.out)?;
    writeln!(w, "{REPORT_HEADER}")?;
    writeln!(w, "{}", report_row(&report))?;
    w.flush()?;

    let mut inputs = vec![args.ckpt.clone()];
    inputs.extend(args.data.input_files());
    write_manifest(
        &args.out,
        "eval",
        args,
        &[&args.out],
        &inputs,
        Some(serde_json::to_value(report)?),
        started,
    )?;
    Ok(())
}
