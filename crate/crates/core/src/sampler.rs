//! Ancestral sampling: start from a prior belief, repeatedly predict, take a
//! noisy measurement of the prediction, and update the belief.

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::BeliefState;
use crate::error::{domain, Result};
use crate::predictor::Denoiser;
use crate::rng::{Role, Stream};
use crate::schedule::PrecisionSchedule;

/// Samples advanced together through the predictor.
const CHUNK_SAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMode {
    /// `mu_0 ~ N(0, 1/lambda0)`.
    #[default]
    Bsi,
    /// `mu_0 = 0` with `lambda0 = 1`.
    Bfn,
}

impl std::str::FromStr for SamplerMode {
    type Err = crate::error::BsiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bsi" => Ok(Self::Bsi),
            "bfn" => Ok(Self::Bfn),
            other => Err(domain(format!(
                "unknown sampler mode '{other}' (expected bsi or bfn)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    schedule: PrecisionSchedule,
    mode: SamplerMode,
    seed: u64,
}

impl SamplerConfig {
    pub fn new(schedule: PrecisionSchedule, mode: SamplerMode, seed: u64) -> Result<Self> {
        if mode == SamplerMode::Bfn && schedule.lambda0() != 1.0 {
            return Err(domain(format!(
                "bfn mode requires lambda0 = 1, got {}",
                schedule.lambda0()
            )));
        }
        Ok(Self {
            schedule,
            mode,
            seed,
        })
    }

    pub fn schedule(&self) -> &PrecisionSchedule {
        &self.schedule
    }

    pub fn mode(&self) -> SamplerMode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Initial belief mean of sample `index`.
    pub fn initial_mean(&self, index: u64, n: usize) -> Vec<f64> {
        match self.mode {
            SamplerMode::Bfn => vec![0.0; n],
            SamplerMode::Bsi => {
                let scale = self.schedule.lambda0().recip().sqrt();
                let mut s = Stream::new(self.seed, Role::PriorDraw, &[index]);
                s.normal_vec(n).into_iter().map(|e| scale * e).collect()
            }
        }
    }
}

/// Standard-normal measurement noise for `(sample, step)`.
pub fn measurement_noise(seed: u64, sample: u64, step: usize, n: usize) -> Vec<f64> {
    Stream::new(seed, Role::MeasurementNoise, &[sample, step as u64]).normal_vec(n)
}

/// Advances rows of `mu0` (sample indices `first..`) through the schedule and
/// returns the final predictions. `record` sees `(step, mu, x_hat)` before each
/// measurement and once after the last update.
fn run_rows<D: Denoiser + ?Sized>(
    pred: &D,
    schedule: &PrecisionSchedule,
    seed: u64,
    first: u64,
    mut mu: Array2<f64>,
    mut record: impl FnMut(usize, &Array2<f64>, &Array2<f64>),
) -> Result<Array2<f64>> {
    let rows = mu.nrows();
    let n = mu.ncols();
    let lambdas = schedule.lambdas();
    for i in 1..=schedule.k() {
        let prev = lambdas[i - 1];
        let x_hat = pred.predict_rows(&mu, &vec![prev; rows])?;
        record(i - 1, &mu, &x_hat);
        let alpha = schedule.alphas()[i - 1];
        let next = lambdas[i];
        let noise_scale = alpha.recip().sqrt();
        for r in 0..rows {
            let eps = measurement_noise(seed, first + r as u64, i, n);
            let mut row = mu.row_mut(r);
            for ((m, xh), e) in row.iter_mut().zip(x_hat.row(r)).zip(&eps) {
                *m = (prev * *m + alpha * (xh + noise_scale * e)) / next;
            }
        }
    }
    let last = lambdas[schedule.k()];
    let out = pred.predict_rows(&mu, &vec![last; rows])?;
    record(schedule.k(), &mu, &out);
    Ok(out)
}

/// Samples from explicit initial means; row `i` uses measurement noise of sample index `i`.
pub fn generate_from<D: Denoiser + ?Sized>(
    pred: &D,
    schedule: &PrecisionSchedule,
    seed: u64,
    mu0: &Array2<f64>,
) -> Result<Array2<f64>> {
    crate::error::check_dim(pred.dim(), mu0.ncols())?;
    let n = mu0.ncols();
    let starts: Vec<usize> = (0..mu0.nrows()).step_by(CHUNK_SAMPLES).collect();
    let chunks: Vec<Array2<f64>> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + CHUNK_SAMPLES).min(mu0.nrows());
            let mu = mu0.slice(ndarray::s![start..end, ..]).to_owned();
            run_rows(pred, schedule, seed, start as u64, mu, |_, _, _| {})
        })
        .collect::<Result<_>>()?;
    let mut out = Array2::zeros((mu0.nrows(), n));
    for (chunk, &start) in chunks.iter().zip(&starts) {
        out.slice_mut(ndarray::s![start..start + chunk.nrows(), ..])
            .assign(chunk);
    }
    Ok(out)
}

fn initial_means(cfg: &SamplerConfig, num_samples: usize, n: usize) -> Array2<f64> {
    let mut mu0 = Array2::zeros((num_samples, n));
    for (i, mut row) in mu0.rows_mut().into_iter().enumerate() {
        row.assign(&ArrayView1::from(&cfg.initial_mean(i as u64, n)));
    }
    mu0
}

/// `num_samples` draws, one row each. Deterministic given the config seed.
pub fn generate<D: Denoiser + ?Sized>(
    pred: &D,
    cfg: &SamplerConfig,
    num_samples: usize,
) -> Result<Array2<f64>> {
    let n = pred.dim();
    if num_samples == 0 {
        return Ok(Array2::zeros((0, n)));
    }
    generate_from(
        pred,
        &cfg.schedule,
        cfg.seed,
        &initial_means(cfg, num_samples, n),
    )
}

/// The `k + 1` beliefs `(mu_i, lambda_i)` of sample `index` with the prediction made from each.
pub fn belief_trajectory<D: Denoiser + ?Sized>(
    pred: &D,
    cfg: &SamplerConfig,
    index: u64,
) -> Result<Vec<(BeliefState, Vec<f64>)>> {
    let n = pred.dim();
    let mu0 = Array2::from_shape_vec((1, n), cfg.initial_mean(index, n)).expect("one row");
    let lambdas = cfg.schedule.lambdas().to_vec();
    let mut trace = Vec::with_capacity(cfg.schedule.k() + 1);
    let mut failure = None;
    run_rows(
        pred,
        &cfg.schedule,
        cfg.seed,
        index,
        mu0,
        |i, mu, x_hat| match BeliefState::new(mu.row(0).to_vec(), lambdas[i]) {
            Ok(b) => trace.push((b, x_hat.row(0).to_vec())),
            Err(e) => failure = failure.take().or(Some(e)),
        },
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(trace),
    }
}
