//! Gradient training of the MLP predictor on the per-dimension loss
//! `(log lambda_m - log lambda0) * lambda * |x - f(mu_lambda, lambda)|^2 / n`,
//! with shifted-grid `t` batches and a parameter EMA.

pub mod checkpoint;
pub mod optim;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::elbo::{mean_and_se, ElboSetup};
use crate::encoder::encode_with_noise;
use crate::error::{check_dim, domain, BsiError, Result};
use crate::predictor::{Predictor, PredictorSpec};
use crate::rng::{Role, Stream};
use crate::schedule::{lambda_of_t, low_discrepancy_batch};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use optim::{ema_update, AdamW, AdamWConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: u64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub ema_beta: f64,
    /// Before this step the EMA mirrors the raw parameters.
    pub ema_start_step: u64,
    pub seed: u64,
    #[serde(default)]
    pub warmup_steps: u64,
    /// Stored in the checkpoint for evaluation; defaults to `2 (lambda_m - lambda0)`.
    #[serde(default)]
    pub alpha_r: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            steps: 1000,
            learning_rate: 1e-3,
            weight_decay: 1e-2,
            ema_beta: 0.9999,
            ema_start_step: 1000,
            seed: 0,
            warmup_steps: 0,
            alpha_r: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.steps == 0 {
            return Err(domain("batch size and step count must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.ema_beta) {
            return Err(domain(format!("EMA beta {} outside [0, 1)", self.ema_beta)));
        }
        self.optimizer().validate()
    }

    fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            warmup_steps: self.warmup_steps,
            ..AdamWConfig::default()
        }
    }
}

/// The random inputs of one training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossDraws {
    pub indices: Vec<usize>,
    pub t: Vec<f64>,
    pub eps: Array2<f64>,
}

impl LossDraws {
    /// Draws for step `step` (1-based): uniform sample indices, one offset per
    /// batch for the shifted `t` grid, and encoder noise per row.
    pub fn for_step(
        seed: u64,
        step: u64,
        batch_size: usize,
        dataset_len: usize,
        n: usize,
    ) -> Result<Self> {
        if dataset_len == 0 {
            return Err(BsiError::Contract("training dataset is empty".into()));
        }
        let mut idx = Stream::new(seed, Role::BatchIndex, &[step]);
        let indices = (0..batch_size).map(|_| idx.below(dataset_len)).collect();
        let delta = Stream::new(seed, Role::BatchOffset, &[step]).uniform();
        let t = low_discrepancy_batch(batch_size, delta)?;
        let mut noise = Stream::new(seed, Role::TrainNoise, &[step]);
        let eps = Array2::from_shape_vec((batch_size, n), noise.normal_vec(batch_size * n))
            .expect("batch x n draws");
        Ok(Self { indices, t, eps })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    /// Mean per-dimension loss over the batch.
    pub mean: f64,
    pub std_error: f64,
    pub lambdas: Vec<f64>,
}

/// Loss of one batch and its gradient with respect to the MLP parameters.
pub fn batch_loss_and_grad(
    spec: &PredictorSpec,
    params: &[f64],
    setup: &ElboSetup,
    data: &Array2<f64>,
    draws: &LossDraws,
) -> Result<(BatchLoss, Vec<f64>)> {
    let pred = Predictor::new(spec, params)?;
    let n = spec.dim;
    check_dim(n, data.ncols())?;
    let b = draws.indices.len();
    check_dim(b, draws.t.len())?;
    check_dim(b, draws.eps.nrows())?;
    let span = setup.log_span();
    let mut lambdas = Vec::with_capacity(b);
    let mut xs = Array2::zeros((b, n));
    let mut mu = Array2::zeros((b, n));
    for (r, (&i, &t)) in draws.indices.iter().zip(&draws.t).enumerate() {
        let lambda = lambda_of_t(t, setup.lambda0(), setup.lambda_m)?;
        let x = data.row(i);
        let m = encode_with_noise(
            &setup.encoder,
            x.as_slice().expect("standard layout"),
            lambda,
            draws.eps.row(r).as_slice().expect("standard layout"),
        )?;
        xs.row_mut(r).assign(&x);
        mu.row_mut(r).assign(&ArrayView1::from(&m));
        lambdas.push(lambda);
    }
    let fwd = pred.forward_batch(&mu, &lambdas)?;
    let diff = &xs - &fwd.x_hat;
    let per_sample: Vec<f64> = diff
        .rows()
        .into_iter()
        .zip(&lambdas)
        .map(|(d, l)| span * l * d.dot(&d) / n as f64)
        .collect();
    let (mean, se) = mean_and_se(&per_sample);
    let mut upstream = diff;
    for (mut row, l) in upstream.rows_mut().into_iter().zip(&lambdas) {
        row *= -2.0 * span * l / (n as f64 * b as f64);
    }
    let mut grad = vec![0.0; params.len()];
    pred.backward_batch(&fwd, &upstream, &mut grad)?;
    Ok((
        BatchLoss {
            mean,
            std_error: if b > 1 { se } else { 0.0 },
            lambdas,
        },
        grad,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepMetrics {
    pub step: u64,
    pub loss: f64,
    pub loss_se: f64,
    pub param_norm: f64,
    pub ema_dist: f64,
}

pub const METRICS_HEADER: &str = "step,loss,loss_se,param_norm,ema_dist";

impl StepMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?}",
            self.step, self.loss, self.loss_se, self.param_norm, self.ema_dist
        )
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Train from freshly initialized parameters. Results depend only on the
/// dataset, spec and config.
pub fn train(data: &Array2<f64>, spec: &PredictorSpec, cfg: &TrainConfig) -> Result<Checkpoint> {
    train_with(data, spec, cfg, |_| {})
}

/// [`train`] reporting metrics after every step.
pub fn train_with(
    data: &Array2<f64>,
    spec: &PredictorSpec,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepMetrics),
) -> Result<Checkpoint> {
    cfg.validate()?;
    spec.validate()?;
    if spec.mlp_shape().is_none() {
        return Err(BsiError::Unsupported(
            "only the mlp backbone has trainable parameters".into(),
        ));
    }
    if data.iter().any(|v| !(-1.0..=1.0).contains(v)) {
        return Err(domain("training data must be normalized to [-1, 1]"));
    }
    let setup = ElboSetup::bsi(spec.lambda0, spec.lambda_m)?;
    let mut params = spec.init_params(cfg.seed);
    let mut ema = params.clone();
    let mut opt = AdamW::new(cfg.optimizer(), params.len())?;
    for step in 1..=cfg.steps {
        let draws = LossDraws::for_step(cfg.seed, step, cfg.batch_size, data.nrows(), spec.dim)?;
        let (loss, grad) = batch_loss_and_grad(spec, &params, &setup, data, &draws)?;
        if !loss.mean.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            let lo = loss.lambdas.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = loss
                .lambdas
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            return Err(BsiError::NonFinite {
                step,
                message: format!(
                    "loss {} with precisions in [{lo:e}, {hi:e}], parameter norm {}",
                    loss.mean,
                    norm(&params)
                ),
            });
        }
        opt.step(&mut params, &grad)?;
        if step <= cfg.ema_start_step {
            ema.copy_from_slice(&params);
        } else {
            ema = ema_update(&ema, &params, cfg.ema_beta)?;
        }
        let ema_dist = norm(
            &ema.iter()
                .zip(&params)
                .map(|(e, p)| e - p)
                .collect::<Vec<_>>(),
        );
        on_step(&StepMetrics {
            step,
            loss: loss.mean,
            loss_se: loss.std_error,
            param_norm: norm(&params),
            ema_dist,
        });
    }
    Ok(Checkpoint {
        spec: spec.clone(),
        lambda0: spec.lambda0,
        lambda_m: spec.lambda_m,
        alpha_r: cfg.alpha_r.unwrap_or(2.0 * (spec.lambda_m - spec.lambda0)),
        step: cfg.steps,
        seed: cfg.seed,
        params,
        ema,
    })
}
