//! Fourier features of the (preconditioned) belief mean and the sinusoidal
//! precision embedding.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub n_min: i32,
    pub n_max: i32,
    pub embed_dim: usize,
    /// Highest angular frequency of the precision embedding; the lowest is 1.
    #[serde(default = "default_max_frequency")]
    pub embed_max_frequency: f64,
}

fn default_max_frequency() -> f64 {
    1e4
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            n_min: 6,
            n_max: 8,
            embed_dim: 32,
            embed_max_frequency: default_max_frequency(),
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_min > self.n_max {
            return Err(domain(format!(
                "n_min = {} exceeds n_max = {}",
                self.n_min, self.n_max
            )));
        }
        if self.embed_dim < 2 || !self.embed_dim.is_multiple_of(2) {
            return Err(domain(format!(
                "embedding size {} must be even and at least 2",
                self.embed_dim
            )));
        }
        if !(self.embed_max_frequency >= 1.0 && self.embed_max_frequency.is_finite()) {
            return Err(domain("embedding frequency range must be at least 1"));
        }
        Ok(())
    }

    fn octaves(&self) -> usize {
        (self.n_max - self.n_min + 1).max(0) as usize
    }

    /// Length of [`fourier_features`] for an `n`-dimensional input.
    pub fn fourier_len(&self, n: usize) -> usize {
        n * (1 + 2 * self.octaves())
    }

    fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        let half = self.embed_dim / 2;
        (0..half).map(move |j| {
            if half == 1 {
                1.0
            } else {
                self.embed_max_frequency.powf(j as f64 / (half - 1) as f64)
            }
        })
    }
}

/// `[v, sin(2^i pi v) for i in n_min..=n_max, cos(2^i pi v) for i in n_min..=n_max]`.
pub fn fourier_features(v: &[f64], cfg: &FeatureConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(cfg.fourier_len(v.len()));
    write_fourier_features(v, cfg, &mut out);
    out
}

pub(crate) fn write_fourier_features(v: &[f64], cfg: &FeatureConfig, out: &mut Vec<f64>) {
    out.extend_from_slice(v);
    let scales: Vec<f64> = (cfg.n_min..=cfg.n_max).map(|i| 2f64.powi(i) * PI).collect();
    for &s in &scales {
        out.extend(v.iter().map(|x| (s * x).sin()));
    }
    for &s in &scales {
        out.extend(v.iter().map(|x| (s * x).cos()));
    }
}

/// Interleaved `(sin(t w_j), cos(t w_j))` pairs, `w_j` geometric from 1 to the configured maximum.
pub fn precision_embedding(t: f64, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(domain(format!("t = {t} outside [0, 1]")));
    }
    let mut out = Vec::with_capacity(cfg.embed_dim);
    write_precision_embedding(t, cfg, &mut out);
    Ok(out)
}

pub(crate) fn write_precision_embedding(t: f64, cfg: &FeatureConfig, out: &mut Vec<f64>) {
    for w in cfg.frequencies() {
        let (s, c) = (t * w).sin_cos();
        out.push(s);
        out.push(c);
    }
}
