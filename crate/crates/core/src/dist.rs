//! Small sampling and density helpers shared by the samplers.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Uniform draw on (0, 1].
#[inline]
pub fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

#[inline]
pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

#[inline]
pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Draw an index with probability proportional to `exp(log_weights[i])`.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Result<usize> {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numerical(format!(
            "no finite weight among {} categories",
            log_weights.len()
        )));
    }
    let mut total = 0.0;
    let probs: Vec<f64> = log_weights
        .iter()
        .map(|w| {
            let p = (w - max).exp();
            total += p;
            p
        })
        .collect();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if target < acc {
            return Ok(i);
        }
    }
    // Rounding can leave `target` at the very top of the range.
    Ok(probs.iter().rposition(|&p| p > 0.0).unwrap_or(0))
}

/// Logarithm of a Gamma(shape, 1) draw; stays finite for tiny shapes.
pub fn ln_gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0);
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
        g.ln()
    } else {
        let g: f64 = Gamma::new(shape + 1.0, 1.0)
            .expect("positive shape")
            .sample(rng);
        g.ln() + open_uniform(rng).ln() / shape
    }
}

/// Gamma draw with the shape/rate parameterization.
pub fn gamma_shape_rate<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    ln_gamma_variate(shape, rng).exp() / rate
}

/// Dirichlet draw. Zero parameters yield exact zeros; at least one must be positive.
pub fn dirichlet<R: Rng + ?Sized>(params: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if params.iter().any(|&a| !(a >= 0.0) || !a.is_finite()) {
        return Err(Error::Parameter(format!(
            "Dirichlet parameters must be finite and non-negative: {params:?}"
        )));
    }
    let logs: Vec<f64> = params
        .iter()
        .map(|&a| {
            if a > 0.0 {
                ln_gamma_variate(a, rng)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let norm = log_sum_exp(&logs);
    if !norm.is_finite() {
        return Err(Error::Parameter(
            "Dirichlet needs at least one positive parameter".into(),
        ));
    }
    Ok(logs.iter().map(|l| (l - norm).exp()).collect())
}

/// Beta(a, b) through two gamma variates.
pub fn beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let la = ln_gamma_variate(a, rng);
    let lb = ln_gamma_variate(b, rng);
    let m = la.max(lb);
    let ea = (la - m).exp();
    ea / (ea + (lb - m).exp())
}

/// Beta(1, b) by inversion, exact in both the b → 0 and b → ∞ limits.
pub fn beta_one<R: Rng + ?Sized>(b: f64, rng: &mut R) -> f64 {
    -(open_uniform(rng).ln() / b).exp_m1()
}
