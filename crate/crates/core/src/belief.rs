//! Exact Gaussian belief algebra.
//!
//! All beliefs are isotropic: a mean vector and one scalar precision. Every
//! function here is pure; randomness lives in the callers.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_precision, domain, BsiError, Result};

/// Current Gaussian belief `N_P(mean, precision)` about the unknown sample.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    mean: Vec<f64>,
    precision: f64,
}

impl BeliefState {
    pub fn new(mean: Vec<f64>, precision: f64) -> Result<Self> {
        check_precision("belief precision", precision)?;
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(domain("belief mean has non-finite entries"));
        }
        Ok(Self { mean, precision })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn precision(&self) -> f64 {
        self.precision
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn into_parts(self) -> (Vec<f64>, f64) {
        (self.mean, self.precision)
    }
}

/// A noisy measurement `y ~ N_P(x, precision)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    value: Vec<f64>,
    precision: f64,
}

impl Measurement {
    pub fn new(value: Vec<f64>, precision: f64) -> Result<Self> {
        check_precision("measurement precision", precision)?;
        Ok(Self { value, precision })
    }

    pub fn value(&self) -> &[f64] {
        &self.value
    }

    pub fn precision(&self) -> f64 {
        self.precision
    }
}

/// Isotropic Gaussian `N_P(mean, precision)` returned by closed-form computations.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    pub precision: f64,
}

impl GaussianParams {
    pub fn new(mean: Vec<f64>, precision: f64) -> Result<Self> {
        check_precision("precision", precision)?;
        Ok(Self { mean, precision })
    }

    pub fn variance(&self) -> f64 {
        1.0 / self.precision
    }

    pub fn std_dev(&self) -> f64 {
        self.precision.recip().sqrt()
    }
}

/// Precision of the prior over the initial belief mean, `p(mu_0) = N_P(0, gamma_0)`.
///
/// `Infinite` is the deterministic `mu_0 = 0` prior. It is kept as its own
/// variant so no formula ever evaluates `lambda0^2 / inf` or `inf - inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum PriorPrecision {
    Finite(f64),
    Infinite,
}

impl PriorPrecision {
    /// `lambda0^2 / gamma0`, the prior's contribution to the encoder variance numerator.
    pub fn prior_term(&self, lambda0: f64) -> f64 {
        match *self {
            PriorPrecision::Finite(g) => lambda0 * lambda0 / g,
            PriorPrecision::Infinite => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PriorPrecision::Finite(g) => check_precision("gamma0", g),
            PriorPrecision::Infinite => Ok(()),
        }
    }
}

/// Conjugate update of a belief with one measurement:
/// `lambda' = lambda + alpha`, `mu' = (lambda mu + alpha y) / lambda'`.
pub fn posterior_update(belief: &BeliefState, m: &Measurement) -> Result<BeliefState> {
    check_dim(belief.dim(), m.value.len())?;
    let precision = belief.precision + m.precision;
    let mean = belief
        .mean
        .iter()
        .zip(&m.value)
        .map(|(&mu, &y)| (belief.precision * mu + m.precision * y) / precision)
        .collect();
    BeliefState::new(mean, precision)
}

/// Distribution of the updated mean when the measurement `y ~ N_P(x, alpha)`
/// is marginalized out: `N_P((lambda mu + alpha x)/lambda', lambda'^2/alpha)`.
pub fn update_marginal(belief: &BeliefState, x: &[f64], alpha: f64) -> Result<GaussianParams> {
    check_precision("alpha", alpha)?;
    check_dim(belief.dim(), x.len())?;
    let lambda_next = belief.precision + alpha;
    let mean = belief
        .mean
        .iter()
        .zip(x)
        .map(|(&mu, &xi)| (belief.precision * mu + alpha * xi) / lambda_next)
        .collect();
    GaussianParams::new(mean, lambda_next * lambda_next / alpha)
}

/// Marginal of two consecutive updates with precisions `alpha1` then `alpha2`.
///
/// Computed through the Gaussian linear system rather than by calling
/// [`update_marginal`] with the summed precision, and then snapped to the
/// collapsed parameters, which it equals analytically.
pub fn compose_update_marginals(
    belief: &BeliefState,
    x: &[f64],
    alpha1: f64,
    alpha2: f64,
) -> Result<GaussianParams> {
    check_precision("alpha1", alpha1)?;
    check_precision("alpha2", alpha2)?;
    let first = update_marginal(belief, x, alpha1)?;
    let lambda1 = belief.precision + alpha1;
    let lambda2 = lambda1 + alpha2;
    // mu'' = (lambda1 mu' + alpha2 y2) / lambda2 with mu' ~ first.
    let variance = alpha2 / (lambda2 * lambda2) + (lambda1 / lambda2).powi(2) * first.variance();
    let linear_mean: Vec<f64> = first
        .mean
        .iter()
        .zip(x)
        .map(|(&nu, &xi)| (lambda1 * nu + alpha2 * xi) / lambda2)
        .collect();
    let collapsed = update_marginal(belief, x, alpha1 + alpha2)?;
    debug_assert!(
        linear_mean
            .iter()
            .zip(&collapsed.mean)
            .all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + b.abs())),
        "two-step mean deviates from collapsed mean"
    );
    debug_assert!(
        ((1.0 / variance) - collapsed.precision).abs() <= 1e-9 * collapsed.precision,
        "two-step precision deviates from collapsed precision"
    );
    Ok(collapsed)
}

/// `KL(update_marginal(belief, x, alpha) || update_marginal(belief, x_hat, alpha)) = alpha/2 ||x - x_hat||^2`.
pub fn kl_update_marginals(
    belief: &BeliefState,
    x: &[f64],
    x_hat: &[f64],
    alpha: f64,
) -> Result<f64> {
    check_precision("alpha", alpha)?;
    check_dim(belief.dim(), x.len())?;
    check_dim(x.len(), x_hat.len())?;
    let sq: f64 = x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(0.5 * alpha * sq)
}

/// Reverse ("noising") conditional `p(mu | mu', x)`: the less precise belief
/// mean at `lambda = lambda0 + alpha` given the next mean `mu'` at
/// `lambda' = lambda + alpha_next` and the sample `x`.
pub fn noising_conditional(
    x: &[f64],
    mu_next: &[f64],
    lambda0: f64,
    gamma0: PriorPrecision,
    alpha: f64,
    alpha_next: f64,
) -> Result<GaussianParams> {
    check_precision("lambda0", lambda0)?;
    check_precision("alpha", alpha)?;
    check_precision("alpha_next", alpha_next)?;
    gamma0.validate()?;
    check_dim(x.len(), mu_next.len())?;

    let lambda = lambda0 + alpha;
    let lambda_next = lambda + alpha_next;
    let encoder_var_num = alpha + gamma0.prior_term(lambda0);
    let xi = lambda * lambda * (1.0 / encoder_var_num + 1.0 / alpha_next);
    let mu_coeff = lambda * lambda_next / alpha_next;
    let x_coeff = match gamma0 {
        PriorPrecision::Infinite => 0.0,
        PriorPrecision::Finite(_) => lambda * (alpha / encoder_var_num - 1.0),
    };
    let mean = mu_next
        .iter()
        .zip(x)
        .map(|(&m, &xi_)| (mu_coeff * m + x_coeff * xi_) / xi)
        .collect();
    GaussianParams::new(mean, xi)
}

/// Coefficients `(a, b)` of the noising conditional mean `(a mu' + b x)`,
/// exposed so callers can verify x-independence without going through sums.
pub fn noising_conditional_coeffs(
    lambda0: f64,
    gamma0: PriorPrecision,
    alpha: f64,
    alpha_next: f64,
) -> Result<(f64, f64)> {
    let p = noising_conditional(&[0.0], &[0.0], lambda0, gamma0, alpha, alpha_next)?;
    let lambda = lambda0 + alpha;
    let lambda_next = lambda + alpha_next;
    let encoder_var_num = alpha + gamma0.prior_term(lambda0);
    let a = lambda * lambda_next / alpha_next / p.precision;
    let b = match gamma0 {
        PriorPrecision::Infinite => 0.0,
        PriorPrecision::Finite(_) => lambda * (alpha / encoder_var_num - 1.0) / p.precision,
    };
    Ok((a, b))
}

impl TryFrom<GaussianParams> for BeliefState {
    type Error = BsiError;

    fn try_from(g: GaussianParams) -> Result<Self> {
        BeliefState::new(g.mean, g.precision)
    }
}
