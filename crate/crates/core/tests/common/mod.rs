//! Independent numerical oracles shared by the integration and acceptance tests.
//! Nothing here calls into the library's closed forms.

#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Mean and variance of `sum_i c_i Z_i` for independent `Z_i ~ N(m_i, v_i)`.
pub fn linear_gaussian(terms: &[(f64, f64, f64)]) -> (f64, f64) {
    terms.iter().fold((0.0, 0.0), |(m, v), &(c, mi, vi)| {
        (m + c * mi, v + c * c * vi)
    })
}

/// Normalized product of two Gaussian densities, in mean/variance form.
pub fn gaussian_product(m1: f64, v1: f64, m2: f64, v2: f64) -> (f64, f64) {
    let v = 1.0 / (1.0 / v1 + 1.0 / v2);
    (v * (m1 / v1 + m2 / v2), v)
}

/// `KL(N(m1, v1 I) || N(m2, v2 I))` for isotropic Gaussians.
pub fn gaussian_kl(m1: &[f64], v1: f64, m2: &[f64], v2: f64) -> f64 {
    let n = m1.len() as f64;
    let sq: f64 = m1.iter().zip(m2).map(|(a, b)| (a - b).powi(2)).sum();
    0.5 * (n * v1 / v2 + sq / v2 - n + n * (v2 / v1).ln())
}

/// Mean and variance of the density `exp(log_density)` tabulated on `points`
/// evenly spaced nodes of `[lo, hi]` (trapezoid rule).
pub fn grid_moments(
    log_density: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    points: usize,
) -> (f64, f64) {
    let h = (hi - lo) / (points - 1) as f64;
    let xs: Vec<f64> = (0..points).map(|i| lo + h * i as f64).collect();
    let logs: Vec<f64> = xs.iter().map(|&x| log_density(x)).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (i, (&x, &l)) in xs.iter().zip(&logs).enumerate() {
        let w = if i == 0 || i == points - 1 { 0.5 } else { 1.0 } * (l - top).exp();
        z += w;
        m1 += w * x;
        m2 += w * x * x;
    }
    let mean = m1 / z;
    (mean, m2 / z - mean * mean)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `int_{l0}^{lm} g(lambda) d lambda` computed in `s = log lambda`.
pub fn integrate_log_space(g: impl Fn(f64) -> f64, l0: f64, lm: f64, tol: f64) -> f64 {
    adaptive_simpson(|s| s.exp() * g(s.exp()), l0.ln(), lm.ln(), tol)
}

pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample variance and its standard error from the fourth central moment.
pub fn variance_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    (m2 * n / (n - 1.0), ((m4 - m2 * m2) / n).sqrt())
}

/// Two-sided one-sample Kolmogorov-Smirnov p-value against `cdf`.
pub fn ks_p_value(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let p: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * if k as i64 % 2 == 1 { 1.0 } else { -1.0 }
                * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    p.clamp(0.0, 1.0)
}

/// Pearson chi-square p-value of observed counts against expected probabilities.
pub fn chi_square_p_value(counts: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * total as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).expect("positive degrees of freedom");
    1.0 - dist.cdf(stat)
}

pub fn log_normal_density(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (x - mean).powi(2) / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
}

pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
