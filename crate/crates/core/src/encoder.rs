//! Closed-form encoder `q(mu_lambda | x, lambda)`: the distribution of the
//! belief mean after observing the true sample with total precision
//! `lambda - lambda0`, marginalized over the prior on the initial mean.

use serde::{Deserialize, Serialize};

use crate::belief::{GaussianParams, PriorPrecision};
use crate::error::{check_precision, domain, Result};
use crate::rng::NoiseSource;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub lambda0: f64,
    pub gamma0: PriorPrecision,
}

impl EncoderConfig {
    pub fn new(lambda0: f64, gamma0: PriorPrecision) -> Result<Self> {
        check_precision("lambda0", lambda0)?;
        gamma0.validate()?;
        if let PriorPrecision::Finite(g) = gamma0 {
            if g < lambda0 {
                return Err(domain(format!(
                    "gamma0 = {g} below lambda0 = {lambda0}: the prior would be more confident than the initial belief"
                )));
            }
        }
        Ok(Self { lambda0, gamma0 })
    }

    /// The default prior, `gamma0 = lambda0`.
    pub fn bsi(lambda0: f64) -> Result<Self> {
        Self::new(lambda0, PriorPrecision::Finite(lambda0))
    }

    /// Deterministic initial mean with `lambda0 = 1`.
    pub fn bfn() -> Self {
        Self {
            lambda0: 1.0,
            gamma0: PriorPrecision::Infinite,
        }
    }

    fn is_bsi_prior(&self) -> bool {
        matches!(self.gamma0, PriorPrecision::Finite(g) if g == self.lambda0)
    }

    fn check_lambda(&self, lambda: f64) -> Result<()> {
        if !(lambda >= self.lambda0 && lambda.is_finite()) {
            return Err(domain(format!(
                "precision {lambda} below lambda0 = {}",
                self.lambda0
            )));
        }
        Ok(())
    }

    /// `(mean scale, per-coordinate std)` of the encoder at `lambda`.
    pub fn moments(&self, lambda: f64) -> Result<(f64, f64)> {
        self.check_lambda(lambda)?;
        Ok(self.mean_scale_and_std(lambda))
    }

    /// Mean scale `(lambda - lambda0)/lambda` and standard deviation of the encoder.
    fn mean_scale_and_std(&self, lambda: f64) -> (f64, f64) {
        let alpha = lambda - self.lambda0;
        let std = if self.is_bsi_prior() {
            lambda.recip().sqrt()
        } else {
            (alpha + self.gamma0.prior_term(self.lambda0)).sqrt() / lambda
        };
        (alpha / lambda, std)
    }
}

/// `N_P(((lambda - lambda0)/lambda) x, lambda^2 / (lambda - lambda0 + lambda0^2/gamma0))`.
///
/// With `gamma0 = lambda0` the precision is exactly `lambda`. With an infinite
/// prior at `lambda = lambda0` the encoder is a point mass and this returns a
/// domain error; [`sample_encoder`] still handles that endpoint.
pub fn encoder_params(cfg: &EncoderConfig, x: &[f64], lambda: f64) -> Result<GaussianParams> {
    cfg.check_lambda(lambda)?;
    let alpha = lambda - cfg.lambda0;
    let precision = if cfg.is_bsi_prior() {
        lambda
    } else {
        let denom = alpha + cfg.gamma0.prior_term(cfg.lambda0);
        if denom <= 0.0 {
            return Err(domain(
                "encoder is a point mass at lambda = lambda0 with an infinite prior",
            ));
        }
        lambda * lambda / denom
    };
    let scale = alpha / lambda;
    GaussianParams::new(x.iter().map(|v| scale * v).collect(), precision)
}

/// One exact draw `mu = ((lambda - lambda0)/lambda) x + std * eps`.
pub fn sample_encoder(
    cfg: &EncoderConfig,
    x: &[f64],
    lambda: f64,
    noise: &mut impl NoiseSource,
) -> Result<Vec<f64>> {
    let eps = noise.standard_normal(x.len());
    encode_with_noise(cfg, x, lambda, &eps)
}

/// Encoder draw with caller-provided standard-normal noise.
pub fn encode_with_noise(
    cfg: &EncoderConfig,
    x: &[f64],
    lambda: f64,
    eps: &[f64],
) -> Result<Vec<f64>> {
    cfg.check_lambda(lambda)?;
    crate::error::check_dim(x.len(), eps.len())?;
    let (scale, std) = cfg.mean_scale_and_std(lambda);
    Ok(x.iter()
        .zip(eps)
        .map(|(v, e)| scale * v + std * e)
        .collect())
}
