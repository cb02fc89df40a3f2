use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use ndarray::Array2;
use serde::Serialize;

use bsi_core::predictor::Predictor;
use bsi_core::sampler::{generate, SamplerConfig, SamplerMode};
use bsi_core::schedule::{PrecisionSchedule, ScheduleKind};

use crate::common::{create, read_checkpoint, usage, write_manifest, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Bin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Bsi,
    Bfn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleArg {
    Log,
    Linear,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, default_value_t = 1024)]
    pub k: usize,
    #[arg(long, default_value_t = 16)]
    pub num: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Bsi)]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Log)]
    pub schedule: ScheduleArg,
    /// Initial precision; defaults to the checkpoint's
    #[arg(long)]
    pub lambda0: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Use raw parameters instead of the EMA
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// CSV with header `d0,...`, one sample per row.
pub fn write_csv(w: &mut impl Write, samples: &Array2<f64>) -> std::io::Result<()> {
    let header: Vec<String> = (0..samples.ncols()).map(|d| format!("d{d}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for row in samples.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Little-endian u64 sample count, then row-major little-endian f64 values.
pub fn write_bin(w: &mut impl Write, samples: &Array2<f64>) -> std::io::Result<()> {
    w.write_all(&(samples.nrows() as u64).to_le_bytes())?;
    for v in samples.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn run(args: &SampleArgs) -> CliResult<()> {
    let started = Instant::now();
    let mode = match args.mode {
        ModeArg::Bsi => SamplerMode::Bsi,
        ModeArg::Bfn => SamplerMode::Bfn,
    };
    if mode == SamplerMode::Bfn && args.lambda0.is_some_and(|l| l != 1.0) {
        return Err(usage("--mode bfn requires --lambda0 1"));
    }
    if args.k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    let ckpt = read_checkpoint(&args.ckpt)?;
    let lambda0 = args.lambda0.unwrap_or(ckpt.lambda0);
    if mode == SamplerMode::Bfn && lambda0 != 1.0 {
        return Err(usage(format!(
            "--mode bfn requires lambda0 = 1; the checkpoint has {lambda0}"
        )));
    }
    let kind = match args.schedule {
        ScheduleArg::Log => ScheduleKind::Log,
        ScheduleArg::Linear => ScheduleKind::Linear,
    };
    let schedule = PrecisionSchedule::new(lambda0, ckpt.lambda_m - lambda0, args.k, kind)
        .map_err(|e| usage(e.to_string()))?;
    let cfg = SamplerConfig::new(schedule, mode, args.seed).map_err(|e| usage(e.to_string()))?;
    let params = if args.raw { &ckpt.params } else { &ckpt.ema };
    let pred = Predictor::new(&ckpt.spec, params)?;
    let samples = generate(&pred, &cfg, args.num)?;

    let mut w = create(&args.out)?;
    match args.format {
        Format::Csv => write_csv(&mut w, &samples)?,
        Format::Bin => write_bin(&mut w, &samples)?,
    }
    w.flush()?;

    #[derive(Serialize)]
    struct Resolved<'a> {
        args: &'a SampleArgs,
        lambda0: f64,
        lambda_m: f64,
        dim: usize,
    }
    let resolved = Resolved {
        args,
        lambda0,
        lambda_m: ckpt.lambda_m,
        dim: ckpt.spec.dim,
    };
    write_manifest(
        &args.out,
        "sample",
        &resolved,
        &[&args.out],
        std::slice::from_ref(&args.ckpt),
        None,
        started,
    )?;
    Ok(())
}
