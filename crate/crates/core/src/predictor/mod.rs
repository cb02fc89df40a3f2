//! The estimator `x_hat = f(mu, lambda)` and its interchangeable backbones.

pub mod bayes;
pub mod features;
pub mod mlp;
pub mod precondition;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::belief::PriorPrecision;
use crate::encoder::EncoderConfig;
use crate::error::{check_dim, check_precision, domain, BsiError, Result};
use crate::schedule::t_of_lambda;

pub use bayes::DataDistribution;
pub use features::{fourier_features, precision_embedding, FeatureConfig};
pub use mlp::{MlpCache, MlpShape};
pub use precondition::{apply_preconditioning, precondition_coeffs, PreconditionCoeffs};

/// Relative slack above `lambda_m` for precisions accumulated by summation.
const LAMBDA_M_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Backbone {
    /// Returns the belief mean unchanged.
    Identity,
    /// Exact posterior mean under a declared data distribution. `gamma0`
    /// defaults to `lambda0`.
    BayesDenoiser {
        data: DataDistribution,
        #[serde(default)]
        gamma0: Option<PriorPrecision>,
    },
    Mlp {
        width: usize,
        depth: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub backbone: Backbone,
    #[serde(default)]
    pub features: FeatureConfig,
    pub lambda0: f64,
    pub lambda_m: f64,
    pub dim: usize,
}

impl PredictorSpec {
    pub fn mlp(dim: usize, width: usize, depth: usize, lambda0: f64, lambda_m: f64) -> Self {
        Self {
            backbone: Backbone::Mlp { width, depth },
            features: FeatureConfig::default(),
            lambda0,
            lambda_m,
            dim,
        }
    }

    pub fn identity(dim: usize, lambda0: f64, lambda_m: f64) -> Self {
        Self {
            backbone: Backbone::Identity,
            features: FeatureConfig::default(),
            lambda0,
            lambda_m,
            dim,
        }
    }

    pub fn bayes(data: DataDistribution, lambda0: f64, lambda_m: f64) -> Self {
        Self {
            dim: data.dim(),
            backbone: Backbone::BayesDenoiser { data, gamma0: None },
            features: FeatureConfig::default(),
            lambda0,
            lambda_m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_precision("lambda0", self.lambda0)?;
        check_precision("lambda_m", self.lambda_m)?;
        if self.lambda_m <= self.lambda0 {
            return Err(domain(format!(
                "lambda_m = {} must exceed lambda0 = {}",
                self.lambda_m, self.lambda0
            )));
        }
        if self.dim == 0 {
            return Err(domain("data dimension must be at least 1"));
        }
        self.features.validate()?;
        match &self.backbone {
            Backbone::Identity => {}
            Backbone::BayesDenoiser { data, .. } => {
                data.validate()?;
                check_dim(self.dim, data.dim())?;
                self.encoder()?;
            }
            Backbone::Mlp { width, depth } => {
                if *width == 0 || *depth == 0 {
                    return Err(domain("mlp width and depth must be at least 1"));
                }
            }
        }
        Ok(())
    }

    pub fn mlp_shape(&self) -> Option<MlpShape> {
        match self.backbone {
            Backbone::Mlp { width, depth } => Some(MlpShape::new(
                self.features.fourier_len(self.dim) + self.features.embed_dim,
                width,
                depth,
                self.dim,
            )),
            _ => None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.mlp_shape().map_or(0, |s| s.param_count())
    }

    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        self.mlp_shape()
            .map_or_else(Vec::new, |s| s.init_params(seed))
    }

    /// Encoder against which the Bayes denoiser computes its posterior.
    pub fn encoder(&self) -> Result<EncoderConfig> {
        let gamma0 = match &self.backbone {
            Backbone::BayesDenoiser {
                gamma0: Some(g), ..
            } => *g,
            _ => PriorPrecision::Finite(self.lambda0),
        };
        EncoderConfig::new(self.lambda0, gamma0)
    }

    fn check_lambda(&self, lambda: f64) -> Result<()> {
        if !(lambda >= self.lambda0 && lambda <= self.lambda_m * (1.0 + LAMBDA_M_SLACK)) {
            return Err(domain(format!(
                "precision {lambda} outside [{}, {}]",
                self.lambda0, self.lambda_m
            )));
        }
        Ok(())
    }
}

/// Anything that maps rows of belief means with per-row precisions to predictions.
pub trait Denoiser: Sync {
    fn dim(&self) -> usize;

    fn predict_rows(&self, mu: &Array2<f64>, lambdas: &[f64]) -> Result<Array2<f64>>;

    fn predict(&self, mu: &[f64], lambda: f64) -> Result<Vec<f64>> {
        check_dim(self.dim(), mu.len())?;
        let rows = Array2::from_shape_vec((1, mu.len()), mu.to_vec()).expect("one row");
        Ok(self
            .predict_rows(&rows, &[lambda])?
            .into_raw_vec_and_offset()
            .0)
    }
}

/// A predictor spec paired with a borrowed parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct Predictor<'a> {
    spec: &'a PredictorSpec,
    params: &'a [f64],
}

/// Batched forward state retained for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchForward {
    pub x_hat: Array2<f64>,
    cache: MlpCache,
    c_out: Vec<f64>,
}

impl<'a> Predictor<'a> {
    pub fn new(spec: &'a PredictorSpec, params: &'a [f64]) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(BsiError::Contract(format!(
                "parameter vector has {} entries, spec needs {}",
                params.len(),
                spec.param_count()
            )));
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &PredictorSpec {
        self.spec
    }

    fn check_rows(&self, mu: &Array2<f64>, lambdas: &[f64]) -> Result<()> {
        check_dim(self.spec.dim, mu.ncols())?;
        check_dim(mu.nrows(), lambdas.len())?;
        lambdas.iter().try_for_each(|&l| self.spec.check_lambda(l))
    }

    /// Network inputs and preconditioning coefficients for each row.
    fn features(
        &self,
        mu: &Array2<f64>,
        lambdas: &[f64],
    ) -> Result<(Array2<f64>, Vec<PreconditionCoeffs>)> {
        let cfg = &self.spec.features;
        let d_in = cfg.fourier_len(self.spec.dim) + cfg.embed_dim;
        let mut data = Vec::with_capacity(mu.nrows() * d_in);
        let mut coeffs = Vec::with_capacity(mu.nrows());
        let mut scaled = vec![0.0; self.spec.dim];
        for (row, &lambda) in mu.rows().into_iter().zip(lambdas) {
            let c = precondition_coeffs(lambda, self.spec.lambda0)?;
            for (s, m) in scaled.iter_mut().zip(row) {
                *s = c.c_in * m;
            }
            features::write_fourier_features(&scaled, cfg, &mut data);
            let t = t_of_lambda(
                lambda.min(self.spec.lambda_m),
                self.spec.lambda0,
                self.spec.lambda_m,
            )?;
            features::write_precision_embedding(t, cfg, &mut data);
            coeffs.push(c);
        }
        let input = Array2::from_shape_vec((mu.nrows(), d_in), data)
            .expect("feature rows have fixed width");
        Ok((input, coeffs))
    }

    /// MLP forward pass keeping the activations needed by [`Self::backward_batch`].
    pub fn forward_batch(&self, mu: &Array2<f64>, lambdas: &[f64]) -> Result<BatchForward> {
        let shape = self.mlp_only()?;
        self.check_rows(mu, lambdas)?;
        let (input, coeffs) = self.features(mu, lambdas)?;
        let (mut out, cache) = shape.forward(self.params, input);
        for ((mut o, m), c) in out.rows_mut().into_iter().zip(mu.rows()).zip(&coeffs) {
            o.zip_mut_with(&m, |f, &m| *f = c.c_skip * m + c.c_out * *f);
        }
        Ok(BatchForward {
            x_hat: out,
            cache,
            c_out: coeffs.iter().map(|c| c.c_out).collect(),
        })
    }

    /// Adds `d(sum(upstream * x_hat))/d(params)` to `grad`.
    pub fn backward_batch(
        &self,
        fwd: &BatchForward,
        upstream: &Array2<f64>,
        grad: &mut [f64],
    ) -> Result<()> {
        let shape = self.mlp_only()?;
        check_dim(fwd.x_hat.nrows(), upstream.nrows())?;
        check_dim(fwd.x_hat.ncols(), upstream.ncols())?;
        check_dim(self.params.len(), grad.len())?;
        let mut d = upstream.clone();
        for (mut row, c) in d.rows_mut().into_iter().zip(&fwd.c_out) {
            row *= *c;
        }
        shape.backward(self.params, &fwd.cache, d, grad);
        Ok(())
    }

    fn mlp_only(&self) -> Result<MlpShape> {
        self.spec.mlp_shape().ok_or_else(|| {
            BsiError::Unsupported("parameter gradients exist only for the mlp backbone".into())
        })
    }
}

impl Denoiser for Predictor<'_> {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn predict_rows(&self, mu: &Array2<f64>, lambdas: &[f64]) -> Result<Array2<f64>> {
        self.check_rows(mu, lambdas)?;
        match &self.spec.backbone {
            Backbone::Identity => Ok(mu.clone()),
            Backbone::BayesDenoiser { data, .. } => {
                let enc = self.spec.encoder()?;
                let mut out = Array2::zeros(mu.raw_dim());
                for ((mut o, m), &l) in out.rows_mut().into_iter().zip(mu.rows()).zip(lambdas) {
                    let m = m.to_vec();
                    let x = data.posterior_mean(&enc, &m, l)?;
                    o.assign(&ndarray::ArrayView1::from(&x));
                }
                Ok(out)
            }
            Backbone::Mlp { .. } => Ok(self.forward_batch(mu, lambdas)?.x_hat),
        }
    }
}

/// Single-sample prediction; see [`Denoiser::predict`].
pub fn predict(spec: &PredictorSpec, params: &[f64], mu: &[f64], lambda: f64) -> Result<Vec<f64>> {
    Predictor::new(spec, params)?.predict(mu, lambda)
}

/// `d(upstream . predict(mu, lambda))/d(params)` for the mlp backbone.
pub fn predict_with_param_grad(
    spec: &PredictorSpec,
    params: &[f64],
    mu: &[f64],
    lambda: f64,
    upstream: &[f64],
) -> Result<Vec<f64>> {
    let p = Predictor::new(spec, params)?;
    p.mlp_only()?;
    check_dim(spec.dim, mu.len())?;
    check_dim(spec.dim, upstream.len())?;
    let rows = Array2::from_shape_vec((1, mu.len()), mu.to_vec()).expect("one row");
    let up = Array2::from_shape_vec((1, upstream.len()), upstream.to_vec()).expect("one row");
    let fwd = p.forward_batch(&rows, &[lambda])?;
    let mut grad = vec![0.0; params.len()];
    p.backward_batch(&fwd, &up, &mut grad)?;
    Ok(grad)
}
