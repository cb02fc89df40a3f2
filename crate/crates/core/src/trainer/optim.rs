//! Adam with decoupled weight decay, and parameter EMA.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Linear warmup length in steps; 0 disables it.
    pub warmup_steps: u64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_steps: 0,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(domain("learning rate must be non-negative"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(domain("weight decay must be non-negative"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(domain("Adam betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(domain("Adam epsilon must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    cfg: AdamWConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, num_params: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    fn current_lr(&self) -> f64 {
        if self.cfg.warmup_steps == 0 {
            self.cfg.learning_rate
        } else {
            self.cfg.learning_rate * (self.t as f64 / self.cfg.warmup_steps as f64).min(1.0)
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        check_dim(self.m.len(), params.len())?;
        check_dim(self.m.len(), grad.len())?;
        self.t += 1;
        let lr = self.current_lr();
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
            ..
        } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let update = (*m / bc1) / ((*v / bc2).sqrt() + eps);
            *p -= lr * (update + weight_decay * *p);
        }
        Ok(())
    }
}

/// `beta * ema + (1 - beta) * params`.
pub fn ema_update(ema: &[f64], params: &[f64], beta: f64) -> Result<Vec<f64>> {
    check_dim(ema.len(), params.len())?;
    if !(0.0..1.0).contains(&beta) {
        return Err(domain(format!("EMA beta {beta} outside [0, 1)")));
    }
    Ok(ema
        .iter()
        .zip(params)
        .map(|(e, p)| beta * e + (1.0 - beta) * p)
        .collect())
}
