//! Training loss, measurement-term estimators (finite and infinite step
//! count), reconstruction terms and bits-per-dimension evaluation.
//!
//! All accounting is in nats; bits appear only in [`EvalReport::bpd`].

use std::f64::consts::{LN_2, PI};

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::{dequantize, Dataset};
use crate::encoder::{encode_with_noise, EncoderConfig};
use crate::error::{check_dim, check_precision, domain, BsiError, Result};
use crate::predictor::Denoiser;
use crate::rng::{hash_u32s, NoiseSource, Role, Stream};
use crate::schedule::{lambda_of_t, PrecisionSchedule, ProposalDistribution, ProposalKind};

/// Rows per predictor call when estimators fan out.
pub(crate) const CHUNK_ROWS: usize = 256;

/// Encoder plus the final precision `lambda_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboSetup {
    pub encoder: EncoderConfig,
    pub lambda_m: f64,
}

impl ElboSetup {
    pub fn new(encoder: EncoderConfig, lambda_m: f64) -> Result<Self> {
        check_precision("lambda_m", lambda_m)?;
        if lambda_m <= encoder.lambda0 {
            return Err(domain(format!(
                "lambda_m = {lambda_m} must exceed lambda0 = {}",
                encoder.lambda0
            )));
        }
        Ok(Self { encoder, lambda_m })
    }

    /// `gamma0 = lambda0`.
    pub fn bsi(lambda0: f64, lambda_m: f64) -> Result<Self> {
        Self::new(EncoderConfig::bsi(lambda0)?, lambda_m)
    }

    pub fn lambda0(&self) -> f64 {
        self.encoder.lambda0
    }

    /// `log lambda_m - log lambda0`.
    pub fn log_span(&self) -> f64 {
        self.lambda_m.ln() - self.lambda0().ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconConfig {
    /// Output precision in normalized data units.
    pub alpha_r: f64,
    pub r: u32,
}

impl ReconConfig {
    pub fn new(alpha_r: f64, r: u32) -> Result<Self> {
        check_precision("alpha_r", alpha_r)?;
        if r < 2 {
            return Err(domain(format!("r = {r} must be at least 2")));
        }
        Ok(Self { alpha_r, r })
    }

    /// `alpha_r = 2 alpha_m`.
    pub fn for_alpha_m(alpha_m: f64, r: u32) -> Result<Self> {
        Self::new(2.0 * alpha_m, r)
    }

    /// Integer-scale units per normalized unit.
    fn levels_per_unit(&self) -> f64 {
        (self.r - 1) as f64 / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub num_mc_measure: usize,
    pub num_mc_recon: usize,
    pub seed: u64,
    #[serde(default)]
    pub proposal: ProposalKind,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            num_mc_measure: 5,
            num_mc_recon: 2,
            seed: 0,
            proposal: ProposalKind::LogUniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub lm_estimate: f64,
    pub lm_std_error: f64,
    pub lr_discretized: f64,
    pub lr_std_error: f64,
    pub bpd: f64,
    pub dim: usize,
    pub num_samples: usize,
    pub num_mc_measure: usize,
    pub num_mc_recon: usize,
}

impl EvalReport {
    pub fn recompute_bpd(lm: f64, lr: f64, dim: usize) -> f64 {
        (lm + lr) / (LN_2 * dim as f64)
    }
}

/// Sample mean and standard error of the mean (NaN error for fewer than two values).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Predictions `f(mu, lambda)` for encoder draws `mu = enc(x_i, lambda_i, eps_i)`,
/// evaluated in fixed-size chunks so results do not depend on the thread pool.
pub(crate) fn predict_encoded<D: Denoiser + ?Sized>(
    pred: &D,
    enc: &EncoderConfig,
    x: &Array2<f64>,
    lambdas: &[f64],
    eps: &Array2<f64>,
) -> Result<Array2<f64>> {
    check_dim(pred.dim(), x.ncols())?;
    check_dim(x.nrows(), lambdas.len())?;
    check_dim(x.nrows(), eps.nrows())?;
    check_dim(x.ncols(), eps.ncols())?;
    let n = x.ncols();
    let starts: Vec<usize> = (0..x.nrows()).step_by(CHUNK_ROWS).collect();
    let chunks: Vec<Array2<f64>> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + CHUNK_ROWS).min(x.nrows());
            let mut mu = Array2::zeros((end - start, n));
            for (r, i) in (start..end).enumerate() {
                let row = encode_with_noise(
                    enc,
                    x.row(i).as_slice().expect("standard layout"),
                    lambdas[i],
                    eps.row(i).as_slice().expect("standard layout"),
                )?;
                mu.row_mut(r).assign(&ArrayView1::from(&row));
            }
            pred.predict_rows(&mu, &lambdas[start..end])
        })
        .collect::<Result<_>>()?;
    let mut out = Array2::zeros((x.nrows(), n));
    for (chunk, &start) in chunks.iter().zip(&starts) {
        out.slice_mut(ndarray::s![start..start + chunk.nrows(), ..])
            .assign(chunk);
    }
    Ok(out)
}

fn repeat_row(x: &[f64], times: usize) -> Array2<f64> {
    Array2::from_shape_fn((times, x.len()), |(_, j)| x[j])
}

fn draw_eps(noise: &mut impl NoiseSource, rows: usize, n: usize) -> Array2<f64> {
    let mut data = Vec::with_capacity(rows * n);
    for _ in 0..rows {
        data.extend(noise.standard_normal(n));
    }
    Array2::from_shape_vec((rows, n), data).expect("rows of n draws")
}

/// One draw of the training loss `(log lambda_m - log lambda0) * lambda * |x - f(mu_lambda, lambda)|^2`
/// with `lambda = lambda0 (lambda_m/lambda0)^t`.
pub fn loss_mc<D: Denoiser + ?Sized>(
    pred: &D,
    x: &[f64],
    t: f64,
    setup: &ElboSetup,
    noise: &mut impl NoiseSource,
) -> Result<f64> {
    if !(0.0..1.0).contains(&t) {
        return Err(domain(format!("t = {t} outside [0, 1)")));
    }
    let lambda = lambda_of_t(t, setup.lambda0(), setup.lambda_m)?;
    let eps = noise.standard_normal(x.len());
    let mu = encode_with_noise(&setup.encoder, x, lambda, &eps)?;
    let x_hat = pred.predict(&mu, lambda)?;
    let err: f64 = x.iter().zip(&x_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(setup.log_span() * lambda * err)
}

/// Importance-sampled `1/2 E_p[h(lambda)/p(lambda)]` with `h(lambda) = |x - f(mu_lambda, lambda)|^2`.
/// Returns the mean and its standard error over `num_mc` draws.
pub fn lm_infinity<D: Denoiser + ?Sized>(
    pred: &D,
    x: &[f64],
    setup: &ElboSetup,
    proposal: ProposalKind,
    num_mc: usize,
    noise: &mut impl NoiseSource,
) -> Result<(f64, f64)> {
    if num_mc < 2 {
        return Err(BsiError::Contract(
            "lm_infinity needs at least 2 draws".into(),
        ));
    }
    let values = lm_infinity_draws(pred, x, setup, proposal, num_mc, noise)?;
    Ok(mean_and_se(&values))
}

/// Per-draw values `h(lambda)/(2 p(lambda))` underlying [`lm_infinity`].
pub fn lm_infinity_draws<D: Denoiser + ?Sized>(
    pred: &D,
    x: &[f64],
    setup: &ElboSetup,
    proposal: ProposalKind,
    num_mc: usize,
    noise: &mut impl NoiseSource,
) -> Result<Vec<f64>> {
    let p = ProposalDistribution::new(setup.lambda0(), setup.lambda_m, proposal)?;
    let mut lambdas = Vec::with_capacity(num_mc);
    let mut eps = Vec::with_capacity(num_mc * x.len());
    for _ in 0..num_mc {
        lambdas.push(p.sample(noise.uniform01())?);
        eps.extend(noise.standard_normal(x.len()));
    }
    let eps = Array2::from_shape_vec((num_mc, x.len()), eps).expect("rows of n draws");
    let xs = repeat_row(x, num_mc);
    let x_hat = predict_encoded(pred, &setup.encoder, &xs, &lambdas, &eps)?;
    let xv = ArrayView1::from(x);
    lambdas
        .iter()
        .zip(x_hat.rows())
        .map(|(&l, row)| Ok(0.5 * squared_distance(xv, row) / p.density(l)?))
        .collect()
}

/// `1/2 sum_i alpha_i E|x - f(mu_{i-1}, lambda_{i-1})|^2` with one encoder draw
/// per step in each of `num_mc` rounds. Returns the mean over rounds and its standard error.
pub fn lm_finite_k<D: Denoiser + ?Sized>(
    pred: &D,
    x: &[f64],
    setup: &ElboSetup,
    schedule: &PrecisionSchedule,
    num_mc: usize,
    noise: &mut impl NoiseSource,
) -> Result<(f64, f64)> {
    if num_mc == 0 {
        return Err(BsiError::Contract(
            "lm_finite_k needs at least 1 round".into(),
        ));
    }
    if (schedule.lambda0() - setup.lambda0()).abs() > 0.0 {
        return Err(domain("schedule and encoder disagree on lambda0"));
    }
    let k = schedule.k();
    let lambdas = &schedule.lambdas()[..k];
    let xs = repeat_row(x, k);
    let xv = ArrayView1::from(x);
    let mut rounds = Vec::with_capacity(num_mc);
    for _ in 0..num_mc {
        let eps = draw_eps(noise, k, x.len());
        let x_hat = predict_encoded(pred, &setup.encoder, &xs, lambdas, &eps)?;
        let total: f64 = schedule
            .alphas()
            .iter()
            .zip(x_hat.rows())
            .map(|(a, row)| 0.5 * a * squared_distance(xv, row))
            .sum();
        rounds.push(total);
    }
    Ok(mean_and_se(&rounds))
}

/// `n (lambda0^2/lambda^2 + 1/lambda)`: expected squared error of the identity
/// predictor for data with `E|x|^2 = n`.
pub fn expected_h_identity(lambda: f64, lambda0: f64, n: usize) -> Result<f64> {
    if !(lambda0 >= 0.0 && lambda > 0.0 && lambda >= lambda0) {
        return Err(domain(format!(
            "precision {lambda} below lambda0 = {lambda0}"
        )));
    }
    Ok(n as f64 * ((lambda0 / lambda).powi(2) + lambda.recip()))
}

/// `-log N(x | x_hat, alpha_r)` averaged over `num_mc` encoder draws at `lambda_m`.
pub fn reconstruction_continuous<D: Denoiser + ?Sized>(
    pred: &D,
    x: &[f64],
    setup: &ElboSetup,
    recon: &ReconConfig,
    num_mc: usize,
    noise: &mut impl NoiseSource,
) -> Result<f64> {
    if num_mc == 0 {
        return Err(BsiError::Contract(
            "reconstruction needs at least 1 draw".into(),
        ));
    }
    let eps = draw_eps(noise, num_mc, x.len());
    let lambdas = vec![setup.lambda_m; num_mc];
    let x_hat = predict_encoded(pred, &setup.encoder, &repeat_row(x, num_mc), &lambdas, &eps)?;
    let n = x.len() as f64;
    let constant = 0.5 * n * ((2.0 * PI).ln() - recon.alpha_r.ln());
    let xv = ArrayView1::from(x);
    let quad: f64 = x_hat
        .rows()
        .into_iter()
        .map(|row| squared_distance(xv, row))
        .sum::<f64>()
        / num_mc as f64;
    Ok(constant + 0.5 * recon.alpha_r * quad)
}

/// `log Q(z)` with `Q` the standard-normal upper tail, accurate far into both tails.
fn log_upper_tail(z: f64) -> f64 {
    if z == f64::INFINITY {
        f64::NEG_INFINITY
    } else if z == f64::NEG_INFINITY {
        0.0
    } else if z < 25.0 {
        (0.5 * erfc(z / std::f64::consts::SQRT_2)).ln()
    } else {
        let z2 = z * z;
        let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
        -0.5 * z2 - z.ln() - 0.5 * (2.0 * PI).ln() + series.ln()
    }
}

/// `log(1 - e^d)` for `d <= 0`.
fn log1m_exp(d: f64) -> f64 {
    if d > -LN_2 {
        (-d.exp_m1()).ln()
    } else {
        (-d.exp()).ln_1p()
    }
}

/// `log(Phi(b) - Phi(a))` for standardized bounds `a < b`, either possibly infinite.
pub fn log_normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        let la = log_upper_tail(a);
        la + log1m_exp(log_upper_tail(b) - la)
    } else if b <= 0.0 {
        let lb = log_upper_tail(-b);
        lb + log1m_exp(log_upper_tail(-a) - lb)
    } else {
        (-(log_upper_tail(-a).exp() + log_upper_tail(b).exp())).ln_1p()
    }
}

/// Log-probability of level `j` under `N(x_hat, alpha_r)` discretized into `r`
/// bins of unit width on the integer scale, with open-ended outer bins.
pub fn discretized_log_likelihood(j: u32, x_hat: f64, recon: &ReconConfig) -> Result<f64> {
    if j >= recon.r {
        return Err(domain(format!("level {j} outside 0..{}", recon.r)));
    }
    let scale = recon.levels_per_unit();
    let center = (x_hat + 1.0) * scale;
    let sigma = scale / recon.alpha_r.sqrt();
    let lo = if j == 0 {
        f64::NEG_INFINITY
    } else {
        j as f64 - 0.5
    };
    let hi = if j == recon.r - 1 {
        f64::INFINITY
    } else {
        j as f64 + 0.5
    };
    Ok(log_normal_mass(
        (lo - center) / sigma,
        (hi - center) / sigma,
    ))
}

/// `E_q[-sum_d log P(level_d | x_hat_d)]` over `num_mc` encoder draws at `lambda_m`, in nats.
pub fn reconstruction_discretized<D: Denoiser + ?Sized>(
    pred: &D,
    levels: &[u32],
    setup: &ElboSetup,
    recon: &ReconConfig,
    num_mc: usize,
    noise: &mut impl NoiseSource,
) -> Result<f64> {
    let values = recon_discretized_draws(pred, levels, setup, recon, num_mc, noise)?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

fn recon_discretized_draws<D: Denoiser + ?Sized>(
    pred: &D,
    levels: &[u32],
    setup: &ElboSetup,
    recon: &ReconConfig,
    num_mc: usize,
    noise: &mut impl NoiseSource,
) -> Result<Vec<f64>> {
    if num_mc == 0 {
        return Err(BsiError::Contract(
            "reconstruction needs at least 1 draw".into(),
        ));
    }
    if let Some(bad) = levels.iter().find(|&&l| l >= recon.r) {
        return Err(domain(format!("level {bad} outside 0..{}", recon.r)));
    }
    let x: Vec<f64> = levels.iter().map(|&l| dequantize(l, recon.r)).collect();
    let eps = draw_eps(noise, num_mc, x.len());
    let lambdas = vec![setup.lambda_m; num_mc];
    let x_hat = predict_encoded(
        pred,
        &setup.encoder,
        &repeat_row(&x, num_mc),
        &lambdas,
        &eps,
    )?;
    x_hat
        .rows()
        .into_iter()
        .map(|row| {
            levels
                .iter()
                .zip(row)
                .map(|(&j, &xh)| discretized_log_likelihood(j, xh, recon).map(|l| -l))
                .sum()
        })
        .collect()
}

/// Dataset-mean `(L_M + L_R') log2(e) / n`.
///
/// Each sample's random streams are keyed by its level values and its
/// occurrence index among identical rows, and per-sample results are reduced
/// in content order, so the report is bit-identical under any permutation of
/// the dataset and any thread count.
pub fn bpd<D: Denoiser + ?Sized>(
    pred: &D,
    data: &Dataset,
    setup: &ElboSetup,
    recon: &ReconConfig,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(BsiError::Contract("evaluation dataset is empty".into()));
    }
    if cfg.num_mc_measure < 1 || cfg.num_mc_recon < 1 {
        return Err(BsiError::Contract(
            "evaluation needs at least one draw per term".into(),
        ));
    }
    check_dim(pred.dim(), data.dim())?;
    if data.r != recon.r {
        return Err(domain(format!(
            "dataset has r = {}, reconstruction uses r = {}",
            data.r, recon.r
        )));
    }

    let mut order: Vec<(Vec<u32>, usize)> = data
        .levels
        .rows()
        .into_iter()
        .map(|r| (r.to_vec(), 0))
        .collect();
    order.sort();
    for i in 1..order.len() {
        if order[i].0 == order[i - 1].0 {
            order[i].1 = order[i - 1].1 + 1;
        }
    }

    let n = data.dim();
    let m = cfg.num_mc_measure;
    let p = ProposalDistribution::new(setup.lambda0(), setup.lambda_m, cfg.proposal)?;
    let mut xs = Array2::zeros((order.len() * m, n));
    let mut lambdas = Vec::with_capacity(order.len() * m);
    let mut eps = Vec::with_capacity(order.len() * m * n);
    let mut recon_values = Vec::with_capacity(order.len());
    for (s, (levels, occ)) in order.iter().enumerate() {
        let key = [hash_u32s(levels), *occ as u64];
        let mut lam_stream = Stream::new(cfg.seed, Role::ProposalDraw, &key);
        let mut eps_stream = Stream::new(cfg.seed, Role::EncoderNoise, &key);
        for r in 0..m {
            lambdas.push(p.sample(lam_stream.uniform())?);
            eps.extend(eps_stream.normal_vec(n));
            for (d, &l) in levels.iter().enumerate() {
                xs[[s * m + r, d]] = dequantize(l, data.r);
            }
        }
        let mut rec_stream = Stream::new(cfg.seed, Role::Reconstruction, &key);
        let draws = recon_discretized_draws(
            pred,
            levels,
            setup,
            recon,
            cfg.num_mc_recon,
            &mut rec_stream,
        )?;
        recon_values.push(draws.iter().sum::<f64>() / draws.len() as f64);
    }
    let eps = Array2::from_shape_vec((order.len() * m, n), eps).expect("rows of n draws");
    let x_hat = predict_encoded(pred, &setup.encoder, &xs, &lambdas, &eps)?;
    let lm_values: Vec<f64> = (0..xs.nrows())
        .map(|i| Ok(0.5 * squared_distance(xs.row(i), x_hat.row(i)) / p.density(lambdas[i])?))
        .collect::<Result<_>>()?;

    let (lm, lm_se) = mean_and_se(&lm_values);
    let (lr, lr_se) = mean_and_se(&recon_values);
    Ok(EvalReport {
        lm_estimate: lm,
        lm_std_error: lm_se,
        lr_discretized: lr,
        lr_std_error: lr_se,
        bpd: EvalReport::recompute_bpd(lm, lr, n),
        dim: n,
        num_samples: data.len(),
        num_mc_measure: cfg.num_mc_measure,
        num_mc_recon: cfg.num_mc_recon,
    })
}

/// `num_mc` draws of `|x - f(mu_lambda, lambda)|^2` at one precision.
pub fn h_draws<D: Denoiser + ?Sized>(
    pred: &D,
    x: &[f64],
    setup: &ElboSetup,
    lambda: f64,
    num_mc: usize,
    noise: &mut impl NoiseSource,
) -> Result<Vec<f64>> {
    let eps = draw_eps(noise, num_mc, x.len());
    let x_hat = predict_encoded(
        pred,
        &setup.encoder,
        &repeat_row(x, num_mc),
        &vec![lambda; num_mc],
        &eps,
    )?;
    let xv = ArrayView1::from(x);
    Ok(x_hat
        .rows()
        .into_iter()
        .map(|row| squared_distance(xv, row))
        .collect())
}

/// `h(lambda) = E|x - f(mu_lambda, lambda)|^2` at each precision, with standard errors.
pub fn h_curve<D: Denoiser + ?Sized>(
    pred: &D,
    x: &[f64],
    setup: &ElboSetup,
    lambdas: &[f64],
    num_mc: usize,
    noise: &mut impl NoiseSource,
) -> Result<Vec<(f64, f64)>> {
    if num_mc < 2 {
        return Err(BsiError::Contract(
            "h_curve needs at least 2 draws per precision".into(),
        ));
    }
    lambdas
        .iter()
        .map(|&l| Ok(mean_and_se(&h_draws(pred, x, setup, l, num_mc, noise)?)))
        .collect()
}

/// `(min, max)` of `h(lambda)/p(lambda)` over the given `(lambda, h)` pairs.
pub fn importance_ratio_range(
    points: &[(f64, f64)],
    proposal: &ProposalDistribution,
) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &(l, h) in points {
        let ratio = h / proposal.density(l)?;
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    Ok((lo, hi))
}
