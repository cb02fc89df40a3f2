//! Precision schedules, the precision <-> t encoding and the importance
//! proposal over belief precisions.

use serde::{Deserialize, Serialize};

use crate::error::{check_precision, domain, BsiError, Result};

/// How the total measurement precision is split over `k` steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    /// Equal steps in `t`, i.e. geometric steps in precision.
    #[default]
    Log,
    /// Equal precision increments `alpha_m / k`.
    Linear,
}

impl std::str::FromStr for ScheduleKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "log" => Ok(Self::Log),
            "linear" => Ok(Self::Linear),
            other => Err(format!(
                "unknown schedule kind `{other}` (expected log or linear)"
            )),
        }
    }
}

/// Per-step measurement precisions `alpha_1..alpha_k` and the belief
/// precisions `lambda_0..lambda_k` they accumulate to.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionSchedule {
    lambda0: f64,
    alpha_m: f64,
    kind: ScheduleKind,
    alphas: Vec<f64>,
    lambdas: Vec<f64>,
}

impl PrecisionSchedule {
    pub fn new(lambda0: f64, alpha_m: f64, k: usize, kind: ScheduleKind) -> Result<Self> {
        check_precision("lambda0", lambda0)?;
        check_precision("alpha_m", alpha_m)?;
        if k == 0 {
            return Err(BsiError::Contract(
                "schedule needs at least one step".into(),
            ));
        }
        let lambda_m = lambda0 + alpha_m;
        let alphas: Vec<f64> = match kind {
            ScheduleKind::Linear => vec![alpha_m / k as f64; k],
            ScheduleKind::Log => {
                let span = (lambda_m / lambda0).ln();
                let at = |i: usize| {
                    if i == k {
                        lambda_m
                    } else {
                        lambda0 * (span * i as f64 / k as f64).exp()
                    }
                };
                (1..=k).map(|i| at(i) - at(i - 1)).collect()
            }
        };
        if let Some(bad) = alphas.iter().find(|a| !(**a > 0.0)) {
            return Err(domain(format!(
                "schedule produced non-positive step precision {bad}"
            )));
        }
        let mut lambdas = Vec::with_capacity(k + 1);
        lambdas.push(lambda0);
        for &a in &alphas {
            let prev = *lambdas.last().unwrap();
            lambdas.push(prev + a);
        }
        Ok(Self {
            lambda0,
            alpha_m,
            kind,
            alphas,
            lambdas,
        })
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn alpha_m(&self) -> f64 {
        self.alpha_m
    }

    pub fn lambda_m(&self) -> f64 {
        self.lambda0 + self.alpha_m
    }

    pub fn k(&self) -> usize {
        self.alphas.len()
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Step precision `alpha_i` for `i` in `1..=k`.
    pub fn alpha(&self, i: usize) -> Result<f64> {
        if i == 0 || i > self.k() {
            return Err(BsiError::Contract(format!(
                "step {i} outside 1..={}",
                self.k()
            )));
        }
        Ok(self.alphas[i - 1])
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// Belief precision after `i` steps, `lambda0 + sum_{j<=i} alpha_j`.
    pub fn lambda_at(&self, i: usize) -> Result<f64> {
        self.lambdas
            .get(i)
            .copied()
            .ok_or_else(|| BsiError::Contract(format!("index {i} outside 0..={}", self.k())))
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }
}

/// Map a belief precision to `t in [0, 1]` through the log-uniform CDF.
pub fn t_of_lambda(lambda: f64, lambda0: f64, lambda_m: f64) -> Result<f64> {
    check_range(lambda0, lambda_m)?;
    if !(lambda >= lambda0 && lambda <= lambda_m) {
        return Err(domain(format!(
            "precision {lambda} outside [{lambda0}, {lambda_m}]"
        )));
    }
    Ok(((lambda.ln() - lambda0.ln()) / (lambda_m.ln() - lambda0.ln())).clamp(0.0, 1.0))
}

/// Inverse of [`t_of_lambda`].
pub fn lambda_of_t(t: f64, lambda0: f64, lambda_m: f64) -> Result<f64> {
    check_range(lambda0, lambda_m)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(domain(format!("t = {t} outside [0, 1]")));
    }
    Ok(((lambda_m.ln() - lambda0.ln()) * t + lambda0.ln()).exp())
}

fn check_range(lambda0: f64, lambda_m: f64) -> Result<()> {
    check_precision("lambda0", lambda0)?;
    check_precision("lambda_m", lambda_m)?;
    if !(lambda_m > lambda0) {
        return Err(domain(format!(
            "lambda_m = {lambda_m} must exceed lambda0 = {lambda0}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalKind {
    /// `p(lambda) ∝ 1/lambda`.
    #[default]
    LogUniform,
    /// `p(lambda) = 1/(lambda_m - lambda0)`.
    Uniform,
}

/// Importance proposal over belief precisions on `[lambda0, lambda_m]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalDistribution {
    lambda0: f64,
    lambda_m: f64,
    kind: ProposalKind,
}

impl ProposalDistribution {
    pub fn log_uniform(lambda0: f64, lambda_m: f64) -> Result<Self> {
        Self::new(lambda0, lambda_m, ProposalKind::LogUniform)
    }

    pub fn new(lambda0: f64, lambda_m: f64, kind: ProposalKind) -> Result<Self> {
        check_range(lambda0, lambda_m)?;
        Ok(Self {
            lambda0,
            lambda_m,
            kind,
        })
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn lambda_m(&self) -> f64 {
        self.lambda_m
    }

    pub fn kind(&self) -> ProposalKind {
        self.kind
    }

    /// Inverse-CDF sample for `u in [0, 1)`.
    pub fn sample(&self, u: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&u) {
            return Err(domain(format!("u = {u} outside [0, 1)")));
        }
        Ok(match self.kind {
            ProposalKind::LogUniform => {
                ((self.lambda_m.ln() - self.lambda0.ln()) * u + self.lambda0.ln()).exp()
            }
            ProposalKind::Uniform => self.lambda0 + (self.lambda_m - self.lambda0) * u,
        })
    }

    pub fn density(&self, lambda: f64) -> Result<f64> {
        // Accept a relative sliver past lambda_m: cumulative sums of step
        // precisions can land one ulp beyond the closed-form endpoint.
        if !(lambda >= self.lambda0 && lambda <= self.lambda_m * (1.0 + 1e-12)) {
            return Err(domain(format!(
                "precision {lambda} outside [{}, {}]",
                self.lambda0, self.lambda_m
            )));
        }
        Ok(match self.kind {
            ProposalKind::LogUniform => 1.0 / (lambda * (self.lambda_m.ln() - self.lambda0.ln())),
            ProposalKind::Uniform => 1.0 / (self.lambda_m - self.lambda0),
        })
    }
}

/// Free-function form of [`ProposalDistribution::sample`].
pub fn sample_proposal(p: &ProposalDistribution, u: f64) -> Result<f64> {
    p.sample(u)
}

/// Free-function form of [`ProposalDistribution::density`].
pub fn proposal_density(p: &ProposalDistribution, lambda: f64) -> Result<f64> {
    p.density(lambda)
}

/// Shifted grid `t_i = (i/b + delta) mod 1` for `i = 0..b`.
pub fn low_discrepancy_batch(b: usize, delta: f64) -> Result<Vec<f64>> {
    if b == 0 {
        return Err(BsiError::Contract("batch size must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(domain(format!("offset {delta} outside [0, 1)")));
    }
    Ok((0..b)
        .map(|i| {
            let t = (i as f64 / b as f64 + delta).fract();
            // fract can round up to exactly 1.0 for values just below an integer
            if t >= 1.0 {
                0.0
            } else {
                t
            }
        })
        .collect())
}
