//! Skip/output/input scalings that keep the network's input and regression
//! target at unit variance for unit-variance data.

use crate::error::{check_dim, domain, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreconditionCoeffs {
    pub c_skip: f64,
    pub c_out: f64,
    pub c_in: f64,
    pub kappa: f64,
}

/// `kappa = 1 + (lambda - lambda0)^2 / lambda`, `c_skip = (lambda - lambda0)/kappa`,
/// `c_out = kappa^-1/2`, `c_in = (lambda/kappa)^1/2`.
pub fn precondition_coeffs(lambda: f64, lambda0: f64) -> Result<PreconditionCoeffs> {
    if !(lambda0 >= 0.0 && lambda0.is_finite()) {
        return Err(domain(format!("lambda0 = {lambda0} must be non-negative")));
    }
    if !(lambda > 0.0 && lambda >= lambda0 && lambda.is_finite()) {
        return Err(domain(format!(
            "precision {lambda} must be finite and at least lambda0 = {lambda0}"
        )));
    }
    let alpha = lambda - lambda0;
    let kappa = 1.0 + alpha * alpha / lambda;
    Ok(PreconditionCoeffs {
        c_skip: alpha / kappa,
        c_out: kappa.recip().sqrt(),
        c_in: (lambda / kappa).sqrt(),
        kappa,
    })
}

/// `c_skip * mu + c_out * backbone_output`.
pub fn apply_preconditioning(
    backbone_output: &[f64],
    mu: &[f64],
    coeffs: &PreconditionCoeffs,
) -> Result<Vec<f64>> {
    check_dim(mu.len(), backbone_output.len())?;
    Ok(mu
        .iter()
        .zip(backbone_output)
        .map(|(m, f)| coeffs.c_skip * m + coeffs.c_out * f)
        .collect())
}

/// Variance of the regression target `c_out^-1 (x - c_skip mu)` for unit-variance
/// data as a function of an arbitrary skip weight, multiplied by `c_out^2`.
/// Minimized by the `c_skip` of [`precondition_coeffs`].
pub fn c_out_squared_for_skip(c_skip: f64, lambda: f64, lambda0: f64) -> f64 {
    let alpha = lambda - lambda0;
    (1.0 - c_skip * alpha / lambda).powi(2) + c_skip * c_skip / lambda
}
