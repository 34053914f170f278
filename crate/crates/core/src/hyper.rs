//! Auxiliary-variable updates for the concentration parameters and the
//! conjugate update of the observation noise variance.

use rand::Rng;

use crate::dist;
use crate::error::{Error, Result};
use crate::model::{GammaPrior, InvGammaPrior};

/// Weight of the `Gamma(a + k, ·)` branch given the auxiliary `η`.
pub fn escobar_west_weight(prior: &GammaPrior, k: usize, n: usize, ln_eta: f64) -> f64 {
    let a = prior.shape + k as f64 - 1.0;
    a / (a + n as f64 * (prior.rate - ln_eta))
}

/// One Escobar–West update of a DP concentration with `k` clusters among
/// `n` draws. Returns `current` unchanged when `n = 0`.
pub fn escobar_west<R: Rng + ?Sized>(
    current: f64,
    k: usize,
    n: usize,
    prior: &GammaPrior,
    rng: &mut R,
) -> Result<f64> {
    if n == 0 {
        return Ok(current);
    }
    if k == 0 {
        return Err(Error::Corruption(format!("{n} draws but no clusters")));
    }
    let eta = dist::beta(current + 1.0, n as f64, rng);
    let ln_eta = eta.ln();
    let rate = prior.rate - ln_eta;
    let pi = escobar_west_weight(prior, k, n, ln_eta);
    let shape = if rng.random::<f64>() < pi {
        prior.shape + k as f64
    } else {
        prior.shape + k as f64 - 1.0
    };
    positive(dist::gamma_shape_rate(shape, rate, rng), "concentration")
}

/// Update of a concentration shared by several DPs, with `n_u` draws in
/// group `u` and `m_total` clusters summed over groups: `w_u ~ Beta(α+1, n_u)`,
/// `s_u ~ Bernoulli(n_u / (n_u + α))`, then
/// `α ~ Gamma(a + m_total - Σ s_u, b - Σ ln w_u)`.
pub fn shared_concentration<R: Rng + ?Sized>(
    current: f64,
    n_u: &[usize],
    m_total: usize,
    prior: &GammaPrior,
    rng: &mut R,
) -> Result<f64> {
    if n_u.iter().all(|&n| n == 0) {
        return Ok(current);
    }
    let mut sum_ln_w = 0.0;
    let mut sum_s = 0usize;
    for &n in n_u.iter().filter(|&&n| n > 0) {
        sum_ln_w += dist::beta(current + 1.0, n as f64, rng).ln();
        if rng.random::<f64>() * (n as f64 + current) < n as f64 {
            sum_s += 1;
        }
    }
    let shape = prior.shape + m_total as f64 - sum_s as f64;
    if !(shape > 0.0) {
        return Err(Error::Corruption(format!(
            "shared concentration shape {shape} is not positive"
        )));
    }
    positive(
        dist::gamma_shape_rate(shape, prior.rate - sum_ln_w, rng),
        "concentration",
    )
}

/// `InvGamma(a + n/2, b + ss/2)` parameters for `n` residuals with sum of squares `ss`.
pub fn sigma2_posterior(prior: &InvGammaPrior, n: usize, ss: f64) -> (f64, f64) {
    (prior.shape + 0.5 * n as f64, prior.scale + 0.5 * ss)
}

pub fn sample_inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    let ln_g = dist::ln_gamma_variate(shape, rng);
    positive((scale.ln() - ln_g).exp(), "noise variance")
}

pub fn sample_sigma2<R: Rng + ?Sized>(
    prior: &InvGammaPrior,
    n: usize,
    ss: f64,
    rng: &mut R,
) -> Result<f64> {
    let (a, b) = sigma2_posterior(prior, n, ss);
    sample_inv_gamma(a, b, rng)
}

fn positive(x: f64, what: &str) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Numerical(format!(
            "{what} draw {x} is not a positive number"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn weight_with_unit_shape_single_cluster() {
        let prior = GammaPrior {
            shape: 1.0,
            rate: 0.7,
        };
        let ln_eta = -0.3;
        let w = escobar_west_weight(&prior, 1, 12, ln_eta);
        assert!((w - 1.0 / (1.0 + 12.0 * (0.7 + 0.3))).abs() < 1e-15);
    }

    #[test]
    fn no_draws_is_a_no_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let prior = GammaPrior {
            shape: 5.0,
            rate: 0.1,
        };
        assert_eq!(escobar_west(3.3, 0, 0, &prior, &mut rng).unwrap(), 3.3);
        assert_eq!(
            shared_concentration(2.2, &[0, 0], 0, &prior, &mut rng).unwrap(),
            2.2
        );
    }

    /// CDF of `p(c | k, n) ∝ prior(c) c^k Γ(c) / Γ(c + n)` by trapezoid.
    fn posterior_cdf(
        prior: &GammaPrior,
        k: usize,
        n: usize,
        lo: f64,
        hi: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        let steps = 200_000;
        let dx = (hi - lo) / steps as f64;
        let xs: Vec<f64> = (0..=steps).map(|i| lo + i as f64 * dx).collect();
        let ln_dens: Vec<f64> = xs
            .iter()
            .map(|&c| {
                (prior.shape - 1.0) * c.ln() - prior.rate * c
                    + k as f64 * c.ln()
                    + dist::ln_gamma(c)
                    - dist::ln_gamma(c + n as f64)
            })
            .collect();
        let mx = ln_dens.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let dens: Vec<f64> = ln_dens.iter().map(|l| (l - mx).exp()).collect();
        let mut cdf = vec![0.0; xs.len()];
        for i in 1..xs.len() {
            cdf[i] = cdf[i - 1] + 0.5 * (dens[i] + dens[i - 1]) * dx;
        }
        let total = cdf[steps];
        cdf.iter_mut().for_each(|c| *c /= total);
        (xs, cdf)
    }

    fn ks(draws: &mut [f64], xs: &[f64], cdf: &[f64]) -> f64 {
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = draws.len() as f64;
        let mut d: f64 = 0.0;
        let mut j = 0;
        for (i, &x) in draws.iter().enumerate() {
            while j + 1 < xs.len() && xs[j + 1] < x {
                j += 1;
            }
            let f = cdf[j];
            d = d
                .max((f - i as f64 / n).abs())
                .max((f - (i + 1) as f64 / n).abs());
        }
        d
    }

    #[test]
    fn escobar_west_stationary_law() {
        let prior = GammaPrior {
            shape: 5.0,
            rate: 0.1,
        };
        let (k, n) = (5, 40);
        let (xs, cdf) = posterior_cdf(&prior, k, n, 1e-6, 60.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut g = 1.0;
        for _ in 0..1000 {
            g = escobar_west(g, k, n, &prior, &mut rng).unwrap();
        }
        let mut draws: Vec<f64> = (0..100_000)
            .map(|_| {
                g = escobar_west(g, k, n, &prior, &mut rng).unwrap();
                g
            })
            .collect();
        assert!(ks(&mut draws, &xs, &cdf) < 0.02);
    }

    #[test]
    fn shared_concentration_single_group_stationary_law() {
        // with one group the shared update targets the same law as Escobar–West
        let prior = GammaPrior {
            shape: 2.0,
            rate: 1.0,
        };
        let (k, n) = (3, 25);
        let (xs, cdf) = posterior_cdf(&prior, k, n, 1e-6, 30.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = 1.0;
        for _ in 0..1000 {
            a = shared_concentration(a, &[n], k, &prior, &mut rng).unwrap();
        }
        let mut draws: Vec<f64> = (0..100_000)
            .map(|_| {
                a = shared_concentration(a, &[n], k, &prior, &mut rng).unwrap();
                a
            })
            .collect();
        assert!(ks(&mut draws, &xs, &cdf) < 0.02);
    }

    #[test]
    fn sigma2_posterior_cases() {
        let prior = InvGammaPrior {
            shape: 5.0,
            scale: 1.0,
        };
        assert_eq!(sigma2_posterior(&prior, 0, 0.0), (5.0, 1.0));
        assert_eq!(sigma2_posterior(&prior, 8, 0.0), (9.0, 1.0));
        let r: f64 = 0.6;
        let (a, b) = sigma2_posterior(&prior, 1, r * r);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_inv_gamma(a, b, &mut rng).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expect = (1.0 + r * r / 2.0) / (5.0 + 0.5 - 1.0);
        assert!((mean - expect).abs() < 3.0 * (var / n as f64).sqrt());
    }
}
