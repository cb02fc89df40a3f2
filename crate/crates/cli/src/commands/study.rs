use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Subcommand};
use ndarray::Array2;
use serde::Serialize;

use bsi_core::data::{quantize, DataKind, Dataset, DatasetSpec};
use bsi_core::elbo::{
    bpd, h_draws, importance_ratio_range, lm_finite_k, lm_infinity_draws, mean_and_se, ElboSetup,
    EvalConfig, ReconConfig,
};
use bsi_core::predictor::{Predictor, PredictorSpec};
use bsi_core::rng::{Role, Stream};
use bsi_core::sampler::{generate, SamplerConfig, SamplerMode};
use bsi_core::schedule::{PrecisionSchedule, ProposalDistribution, ProposalKind, ScheduleKind};
use bsi_core::trainer::{train, TrainConfig};

use crate::common::{
    create, parse_list, read_checkpoint, usage, write_manifest, CliResult, DatasetArgs,
};

#[derive(Debug, Clone, Args, Serialize)]
pub struct StudyCommon {
    /// identity, bayes (exact denoiser for the dataset), or a checkpoint path
    #[arg(long, default_value = "identity")]
    pub predictor: String,
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Initial precision for analytic predictors
    #[arg(long, default_value_t = 0.01)]
    pub lambda0: f64,
    #[arg(long, default_value_t = 1e6)]
    pub alpha_m: f64,
    /// Use raw checkpoint parameters instead of the EMA
    #[arg(long)]
    pub raw: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
pub enum StudyCommand {
    /// Finite-step measurement term against k, plus the infinite-step estimate
    Convergence {
        #[command(flatten)]
        common: StudyCommon,
        #[arg(long, default_value = "10,100,1000,10000")]
        ks: String,
        /// Monte Carlo rounds per k
        #[arg(long, default_value_t = 200)]
        rounds: usize,
        /// Draws for the infinite-step estimate
        #[arg(long, default_value_t = 100_000)]
        mc_inf: usize,
    },
    /// Range of h/p under uniform and log-uniform proposals, with estimator standard errors
    Variance {
        #[command(flatten)]
        common: StudyCommon,
        #[arg(long, default_value_t = 200)]
        grid: usize,
        /// Draws per grid point when h is estimated by Monte Carlo
        #[arg(long, default_value_t = 200)]
        mc: usize,
        /// Draws per estimator run
        #[arg(long, default_value_t = 1000)]
        budget: usize,
    },
    /// h(lambda) at log-spaced precisions
    HCurve {
        #[command(flatten)]
        common: StudyCommon,
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long, default_value_t = 1000)]
        mc: usize,
    },
    /// BPD and atom coverage of generated samples against lambda0
    Lambda0Sweep {
        #[command(flatten)]
        common: StudyCommon,
        #[arg(long, default_value = "0.001,0.01,0.1,1")]
        lambda0s: String,
        /// Sampling steps
        #[arg(long, default_value_t = 256)]
        k: usize,
        #[arg(long, default_value_t = 1000)]
        num_gen: usize,
        #[arg(long, default_value_t = 5)]
        mc_measure: usize,
        #[arg(long, default_value_t = 2)]
        mc_recon: usize,
        /// Train a fresh MLP per lambda0 for this many steps instead of using an analytic predictor
        #[arg(long, default_value_t = 0)]
        train_steps: u64,
    },
}

/// A predictor spec with owned parameters.
struct Model {
    spec: PredictorSpec,
    params: Vec<f64>,
}

impl Model {
    fn predictor(&self) -> CliResult<Predictor<'_>> {
        Ok(Predictor::new(&self.spec, &self.params)?)
    }

    fn setup(&self) -> CliResult<ElboSetup> {
        Ok(ElboSetup::bsi(self.spec.lambda0, self.spec.lambda_m)?)
    }
}

fn build_model(common: &StudyCommon, dspec: &DatasetSpec, lambda0: f64) -> CliResult<Model> {
    let lambda_m = lambda0 + common.alpha_m;
    let spec = match common.predictor.as_str() {
        "identity" => PredictorSpec::identity(dspec.dim, lambda0, lambda_m),
        "bayes" => PredictorSpec::bayes(dspec.quantized_distribution(), lambda0, lambda_m),
        path => {
            let ckpt = read_checkpoint(path.as_ref())?;
            if ckpt.spec.dim != dspec.dim {
                return Err(usage(format!(
                    "checkpoint has {} dimensions, dataset has {}",
                    ckpt.spec.dim, dspec.dim
                )));
            }
            let params = if common.raw { ckpt.params } else { ckpt.ema };
            return Ok(Model {
                spec: ckpt.spec,
                params,
            });
        }
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    Ok(Model {
        spec,
        params: Vec::new(),
    })
}

fn input_files(common: &StudyCommon) -> Vec<PathBuf> {
    let mut inputs = common.data.input_files();
    if !matches!(common.predictor.as_str(), "identity" | "bayes") {
        inputs.push(PathBuf::from(&common.predictor));
    }
    inputs
}

fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| {
            if i + 1 == points {
                hi
            } else {
                (a + (b - a) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}

fn row(data: &Dataset, i: usize) -> Vec<f64> {
    data.continuous.row(i % data.len()).to_vec()
}

/// Splits `total` draws over dataset rows round-robin and concatenates per-row draws.
fn spread<F>(data: &Dataset, total: usize, mut per_row: F) -> CliResult<Vec<f64>>
where
    F: FnMut(usize, &[f64], usize) -> CliResult<Vec<f64>>,
{
    let rows = data.len().min(total.max(1));
    let mut values = Vec::with_capacity(total);
    for j in 0..rows {
        let count = total / rows + usize::from(j < total % rows);
        if count > 0 {
            values.extend(per_row(j, &row(data, j), count)?);
        }
    }
    Ok(values)
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

pub fn run(cmd: &StudyCommand) -> CliResult<()> {
    let started = Instant::now();
    let common = match cmd {
        StudyCommand::Convergence { common, .. }
        | StudyCommand::Variance { common, .. }
        | StudyCommand::HCurve { common, .. }
        | StudyCommand::Lambda0Sweep { common, .. } => common,
    };
    let (dspec, data) = common.data.load()?;
    let mut w = create(&common.out)?;
    let name = match cmd {
        StudyCommand::Convergence {
            ks, rounds, mc_inf, ..
        } => {
            let ks: Vec<usize> = parse_list(ks, "--ks")?;
            if ks.contains(&0) || *rounds == 0 || *mc_inf < 2 {
                return Err(usage(
                    "--ks entries and --rounds must be positive; --mc-inf at least 2",
                ));
            }
            let model = build_model(common, &dspec, common.lambda0)?;
            let pred = model.predictor()?;
            let setup = model.setup()?;
            writeln!(w, "k,estimate,std_error")?;
            for &k in &ks {
                let schedule = PrecisionSchedule::new(
                    setup.lambda0(),
                    setup.lambda_m - setup.lambda0(),
                    k,
                    ScheduleKind::Log,
                )?;
                let mut s = Stream::new(common.seed, Role::Study, &[1, k as u64]);
                let values = spread(&data, *rounds, |_, x, count| {
                    (0..count)
                        .map(|_| Ok(lm_finite_k(&pred, x, &setup, &schedule, 1, &mut s)?.0))
                        .collect()
                })?;
                let (m, se) = mean_and_se(&values);
                writeln!(w, "{k},{},{}", fmt(m), fmt(se))?;
            }
            let mut s = Stream::new(common.seed, Role::Study, &[2]);
            let values = spread(&data, *mc_inf, |_, x, count| {
                Ok(lm_infinity_draws(
                    &pred,
                    x,
                    &setup,
                    ProposalKind::LogUniform,
                    count,
                    &mut s,
                )?)
            })?;
            let (m, se) = mean_and_se(&values);
            writeln!(w, "inf,{},{}", fmt(m), fmt(se))?;
            "study convergence"
        }
        StudyCommand::Variance {
            grid, mc, budget, ..
        } => {
            if *grid < 2 || *mc < 1 || *budget < 2 {
                return Err(usage(
                    "--grid and --budget must be at least 2, --mc at least 1",
                ));
            }
            let model = build_model(common, &dspec, common.lambda0)?;
            let pred = model.predictor()?;
            let setup = model.setup()?;
            let lambdas = log_grid(setup.lambda0(), setup.lambda_m, *grid);
            let n = dspec.dim;
            let mean_sq: f64 =
                data.continuous.iter().map(|v| v * v).sum::<f64>() / data.len() as f64;
            let mut s = Stream::new(common.seed, Role::Study, &[3]);
            let h: Vec<(f64, f64)> = lambdas
                .iter()
                .map(|&l| {
                    let value = if common.predictor == "identity" {
                        (setup.lambda0() / l).powi(2) * mean_sq + n as f64 / l
                    } else {
                        let draws = spread(&data, *mc, |_, x, count| {
                            Ok(h_draws(&pred, x, &setup, l, count, &mut s)?)
                        })?;
                        mean_and_se(&draws).0
                    };
                    Ok((l, value))
                })
                .collect::<CliResult<_>>()?;
            writeln!(w, "proposal,ratio_min,ratio_max,range,lm_estimate,lm_se")?;
            for (label, kind) in [
                ("uniform", ProposalKind::Uniform),
                ("log-uniform", ProposalKind::LogUniform),
            ] {
                let p = ProposalDistribution::new(setup.lambda0(), setup.lambda_m, kind)?;
                let (lo, hi) = importance_ratio_range(&h, &p)?;
                let mut s = Stream::new(common.seed, Role::Study, &[4, kind as u64]);
                let values = spread(&data, *budget, |_, x, count| {
                    Ok(lm_infinity_draws(&pred, x, &setup, kind, count, &mut s)?)
                })?;
                let (m, se) = mean_and_se(&values);
                writeln!(
                    w,
                    "{label},{},{},{},{},{}",
                    fmt(lo),
                    fmt(hi),
                    fmt(hi / lo),
                    fmt(m),
                    fmt(se)
                )?;
            }
            "study variance"
        }
        StudyCommand::HCurve { points, mc, .. } => {
            if *points == 0 || *mc < 2 {
                return Err(usage("--points must be positive and --mc at least 2"));
            }
            let model = build_model(common, &dspec, common.lambda0)?;
            let pred = model.predictor()?;
            let setup = model.setup()?;
            let n = dspec.dim as f64;
            writeln!(w, "lambda,h,h_se,h_identity")?;
            for (i, l) in log_grid(setup.lambda0(), setup.lambda_m, *points)
                .into_iter()
                .enumerate()
            {
                let mut s = Stream::new(common.seed, Role::Study, &[5, i as u64]);
                let mut sq = Vec::new();
                let draws = spread(&data, *mc, |_, x, count| {
                    sq.extend(std::iter::repeat_n(
                        x.iter().map(|v| v * v).sum::<f64>(),
                        count,
                    ));
                    Ok(h_draws(&pred, x, &setup, l, count, &mut s)?)
                })?;
                let (m, se) = mean_and_se(&draws);
                let mean_sq = sq.iter().sum::<f64>() / sq.len() as f64;
                let closed = (setup.lambda0() / l).powi(2) * mean_sq + n / l;
                writeln!(w, "{},{},{},{}", fmt(l), fmt(m), fmt(se), fmt(closed))?;
            }
            "study h-curve"
        }
        StudyCommand::Lambda0Sweep {
            lambda0s,
            k,
            num_gen,
            mc_measure,
            mc_recon,
            train_steps,
            ..
        } => {
            let lambda0s: Vec<f64> = parse_list(lambda0s, "--lambda0s")?;
            if *k == 0 || *mc_measure == 0 || *mc_recon == 0 {
                return Err(usage("--k, --mc-measure and --mc-recon must be positive"));
            }
            let atoms: Vec<Vec<u32>> = match &dspec.kind {
                DataKind::PointSet { atoms, .. } => atoms
                    .iter()
                    .map(|a| a.iter().map(|v| quantize(*v, dspec.r)).collect())
                    .collect(),
                _ => Vec::new(),
            };
            let weights: Vec<f64> = match &dspec.kind {
                DataKind::PointSet { weights, .. } => weights.clone(),
                _ => Vec::new(),
            };
            writeln!(
                w,
                "lambda0,bpd,lm_nats,lm_se,lr_nats,hit_rate,min_atom_share"
            )?;
            for (i, &l0) in lambda0s.iter().enumerate() {
                let model = if *train_steps > 0 {
                    let spec = PredictorSpec::mlp(dspec.dim, 64, 3, l0, l0 + common.alpha_m);
                    let cfg = TrainConfig {
                        steps: *train_steps,
                        seed: common.seed,
                        ema_start_step: train_steps / 2,
                        ema_beta: 0.99,
                        ..TrainConfig::default()
                    };
                    let ckpt = train(&data.continuous, &spec, &cfg)?;
                    Model {
                        spec,
                        params: ckpt.ema,
                    }
                } else {
                    build_model(common, &dspec, l0)?
                };
                let pred = model.predictor()?;
                let setup = model.setup()?;
                let recon = ReconConfig::for_alpha_m(common.alpha_m, dspec.r)?;
                let cfg = EvalConfig {
                    num_mc_measure: *mc_measure,
                    num_mc_recon: *mc_recon,
                    seed: common.seed,
                    ..EvalConfig::default()
                };
                let report = bpd(&pred, &data, &setup, &recon, &cfg)?;
                let schedule = PrecisionSchedule::new(l0, common.alpha_m, *k, ScheduleKind::Log)?;
                let sampler = SamplerConfig::new(
                    schedule,
                    SamplerMode::Bsi,
                    common.seed.wrapping_add(i as u64),
                )?;
                let samples = generate(&pred, &sampler, *num_gen)?;
                let (hit, share) = coverage(&samples, &atoms, &weights, dspec.r);
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    fmt(l0),
                    fmt(report.bpd),
                    fmt(report.lm_estimate),
                    fmt(report.lm_std_error),
                    fmt(report.lr_discretized),
                    fmt(hit),
                    fmt(share)
                )?;
            }
            "study lambda0-sweep"
        }
    };
    w.flush()?;
    drop(w);
    write_manifest(
        &common.out,
        name,
        cmd,
        &[&common.out],
        &input_files(common),
        None,
        started,
    )?;
    Ok(())
}

/// Fraction of samples whose quantized row equals an atom, and the smallest
/// per-atom frequency relative to its weight. NaN without atoms.
fn coverage(samples: &Array2<f64>, atoms: &[Vec<u32>], weights: &[f64], r: u32) -> (f64, f64) {
    if atoms.is_empty() || samples.nrows() == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut counts = vec![0usize; atoms.len()];
    for s in samples.rows() {
        let q: Vec<u32> = s.iter().map(|v| quantize(*v, r)).collect();
        if let Some(a) = atoms.iter().position(|a| *a == q) {
            counts[a] += 1;
        }
    }
    let total = samples.nrows() as f64;
    let hit = counts.iter().sum::<usize>() as f64 / total;
    let share = counts
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(c, w)| *c as f64 / total / w)
        .fold(f64::INFINITY, f64::min);
    (hit, share)
}
