//! Exact posterior-mean denoiser for data distributions with a closed-form
//! encoder marginal.

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{check_dim, domain, Result};

/// Finite point set or finite mixture of isotropic Gaussians sharing one std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataDistribution {
    PointSet {
        atoms: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    GaussianMixture {
        means: Vec<Vec<f64>>,
        std: f64,
        weights: Vec<f64>,
    },
}

impl DataDistribution {
    pub fn uniform_point_set(atoms: Vec<Vec<f64>>) -> Result<Self> {
        let w = vec![1.0 / atoms.len().max(1) as f64; atoms.len()];
        let d = Self::PointSet { atoms, weights: w };
        d.validate()?;
        Ok(d)
    }

    fn centers_and_weights(&self) -> (&[Vec<f64>], &[f64]) {
        match self {
            Self::PointSet { atoms, weights } => (atoms, weights),
            Self::GaussianMixture { means, weights, .. } => (means, weights),
        }
    }

    fn component_variance(&self) -> f64 {
        match self {
            Self::PointSet { .. } => 0.0,
            Self::GaussianMixture { std, .. } => std * std,
        }
    }

    pub fn dim(&self) -> usize {
        self.centers_and_weights().0.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let (centers, weights) = self.centers_and_weights();
        if centers.is_empty() {
            return Err(domain("data distribution has no components"));
        }
        check_dim(centers.len(), weights.len())?;
        let n = centers[0].len();
        if n == 0 {
            return Err(domain("data distribution has zero dimensions"));
        }
        for c in centers {
            check_dim(n, c.len())?;
            if c.iter().any(|v| !v.is_finite()) {
                return Err(domain("non-finite component location"));
            }
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(domain("component weights must be non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(domain(format!("component weights sum to {total}, not 1")));
        }
        if let Self::GaussianMixture { std, .. } = self {
            if !(*std >= 0.0 && std.is_finite()) {
                return Err(domain(format!("component std {std} must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> Vec<f64> {
        let (centers, weights) = self.centers_and_weights();
        let mut out = vec![0.0; self.dim()];
        for (c, w) in centers.iter().zip(weights) {
            for (o, v) in out.iter_mut().zip(c) {
                *o += w * v;
            }
        }
        out
    }

    /// `E[x | mu_lambda = mu]` when `mu_lambda ~ q(. | x, lambda)` under `enc`.
    pub fn posterior_mean(&self, enc: &EncoderConfig, mu: &[f64], lambda: f64) -> Result<Vec<f64>> {
        check_dim(self.dim(), mu.len())?;
        let (scale, std) = enc.moments(lambda)?;
        if scale == 0.0 {
            return Ok(self.mean());
        }
        let (centers, weights) = self.centers_and_weights();
        let s2 = self.component_variance();
        let noise_var = std * std;
        let marginal_var = scale * scale * s2 + noise_var;
        if marginal_var <= 0.0 {
            return Err(domain(
                "posterior undefined: encoder is noiseless and components are points",
            ));
        }
        let n = mu.len() as f64;
        let log_resp: Vec<f64> = centers
            .iter()
            .zip(weights)
            .map(|(c, w)| {
                let d2: f64 = mu.iter().zip(c).map(|(m, v)| (m - scale * v).powi(2)).sum();
                w.ln() - 0.5 * d2 / marginal_var - 0.5 * n * marginal_var.ln()
            })
            .collect();
        let max = log_resp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let resp: Vec<f64> = log_resp.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = resp.iter().sum();
        let shrink = scale * s2 / marginal_var;
        let mut out = vec![0.0; mu.len()];
        for (c, r) in centers.iter().zip(&resp) {
            let r = r / z;
            if r == 0.0 {
                continue;
            }
            for ((o, v), m) in out.iter_mut().zip(c).zip(mu) {
                *o += r * (v + shrink * (m - scale * v));
            }
        }
        Ok(out)
    }
}
