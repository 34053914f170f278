//! Closed-form variance and correlation of event probabilities under the
//! global and local random measures, and a truncated Monte Carlo check.

use rand::Rng;
use serde::Serialize;

use crate::base_measure::BaseMeasure;
use crate::bvn::bvn_rect;
use crate::dist::{self, normal_cdf};
use crate::error::{Error, Result};

/// Interval `(lo, hi)` at one grid slot. Either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventRect {
    pub slot: usize,
    pub lo: f64,
    pub hi: f64,
}

impl EventRect {
    pub fn new(slot: usize, lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::Parameter(format!(
                "empty event interval ({lo}, {hi})"
            )));
        }
        Ok(Self { slot, lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    fn check(&self, h: &BaseMeasure) -> Result<()> {
        if self.slot >= h.len() {
            return Err(Error::Parameter(format!(
                "event slot {} outside a grid of {} slots",
                self.slot,
                h.len()
            )));
        }
        Ok(())
    }
}

pub fn g_of(c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::Parameter(format!(
            "concentration must be positive, got {c}"
        )));
    }
    Ok(1.0 / (c + 1.0))
}

fn standardize(e: &EventRect, mean: f64, sd: f64) -> (f64, f64) {
    ((e.lo - mean) / sd, (e.hi - mean) / sd)
}

/// `H_u(A)`.
pub fn h_prob(h: &BaseMeasure, a: &EventRect) -> Result<f64> {
    a.check(h)?;
    let (m, c) = h.marginal_slot(a.slot);
    let (lo, hi) = standardize(a, m, c.sqrt());
    Ok((normal_cdf(hi) - normal_cdf(lo)).max(0.0))
}

/// `H_uv(A, B)`.
pub fn h_joint(h: &BaseMeasure, a: &EventRect, b: &EventRect) -> Result<f64> {
    a.check(h)?;
    b.check(h)?;
    let (mu, cu) = h.marginal_slot(a.slot);
    let (mv, cv) = h.marginal_slot(b.slot);
    let rho = (h.cov()[(a.slot, b.slot)] / (cu * cv).sqrt()).clamp(-1.0, 1.0);
    Ok(bvn_rect(
        standardize(a, mu, cu.sqrt()),
        standardize(b, mv, cv.sqrt()),
        rho,
    ))
}

fn spread(p: f64) -> Result<f64> {
    let s = p - p * p;
    if !(s > 0.0) {
        return Err(Error::Numerical(format!(
            "correlation undefined for an event of probability {p}"
        )));
    }
    Ok(s)
}

pub fn var_q(h: &BaseMeasure, gamma: f64, a: &EventRect) -> Result<f64> {
    let p = h_prob(h, a)?;
    Ok(g_of(gamma)? * (p - p * p))
}

pub fn cov_q(h: &BaseMeasure, gamma: f64, a: &EventRect, b: &EventRect) -> Result<f64> {
    Ok(g_of(gamma)? * (h_joint(h, a, b)? - h_prob(h, a)? * h_prob(h, b)?))
}

/// `Corr(Q_u(A), Q_v(B))`; free of γ.
pub fn corr_q(h: &BaseMeasure, a: &EventRect, b: &EventRect) -> Result<f64> {
    let (pa, pb) = (h_prob(h, a)?, h_prob(h, b)?);
    let (sa, sb) = (spread(pa)?, spread(pb)?);
    Ok((h_joint(h, a, b)? - pa * pb) / (sa * sb).sqrt())
}

fn local_factor(gamma: f64, alpha: f64) -> Result<f64> {
    let (g, a) = (g_of(gamma)?, g_of(alpha)?);
    Ok(g + a - g * a)
}

pub fn var_g(h: &BaseMeasure, gamma: f64, alpha: f64, a: &EventRect) -> Result<f64> {
    let p = h_prob(h, a)?;
    Ok(local_factor(gamma, alpha)? * (p - p * p))
}

/// `Corr(G_u(A), G_v(B))` for distinct slots.
pub fn corr_g(
    h: &BaseMeasure,
    gamma: f64,
    alpha_u: f64,
    alpha_v: f64,
    a: &EventRect,
    b: &EventRect,
) -> Result<f64> {
    let f = (local_factor(gamma, alpha_u)? * local_factor(gamma, alpha_v)?).sqrt();
    Ok(g_of(gamma)? * corr_q(h, a, b)? / f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McMoments {
    pub var_q_u: Estimate,
    pub var_q_v: Estimate,
    pub corr_q: Estimate,
    pub var_g_u: Estimate,
    pub var_g_v: Estimate,
    pub corr_g: Estimate,
}

pub const DEFAULT_TRUNCATION: usize = 1000;
pub const DEFAULT_REPLICATES: usize = 20_000;

fn var_corr(xs: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let (mx, my) = xs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (mx / n, my / n);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in xs {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    let d = n - 1.0;
    (sxx / d, syy / d, sxy / (sxx * syy).sqrt())
}

/// Point estimates from all replicates, standard errors from the means of
/// 10 to 100 batches of at least 200 replicates where possible.
fn summarize(pairs: &[(f64, f64)]) -> [Estimate; 3] {
    let full = var_corr(pairs);
    let size = pairs.len() / (pairs.len() / 200).clamp(10, 100);
    let batches: Vec<(f64, f64, f64)> = pairs.chunks_exact(size).map(var_corr).collect();
    let b = batches.len() as f64;
    let se = |f: &dyn Fn(&(f64, f64, f64)) -> f64| {
        let m = batches.iter().map(f).sum::<f64>() / b;
        (batches.iter().map(|x| (f(x) - m).powi(2)).sum::<f64>() / (b - 1.0) / b).sqrt()
    };
    [
        Estimate {
            value: full.0,
            se: se(&|x| x.0),
        },
        Estimate {
            value: full.1,
            se: se(&|x| x.1),
        },
        Estimate {
            value: full.2,
            se: se(&|x| x.2),
        },
    ]
}

/// Simulate `Q^L` with `β ~ Dir(γ/L, …, γ/L)` and `G_u^L` with
/// `π_u ~ Dir(α_u β)`, and estimate the moments of `(Q_u(A), Q_v(B))` and
/// `(G_u(A), G_v(B))` over `replicates` independent draws.
#[allow(clippy::too_many_arguments)]
pub fn mc_truncated<R: Rng + ?Sized>(
    h: &BaseMeasure,
    gamma: f64,
    alpha_u: f64,
    alpha_v: f64,
    a: &EventRect,
    b: &EventRect,
    truncation: usize,
    replicates: usize,
    rng: &mut R,
) -> Result<McMoments> {
    if truncation < 2 || replicates < 100 {
        return Err(Error::Parameter(format!(
            "need truncation >= 2 and replicates >= 100, got {truncation} and {replicates}"
        )));
    }
    a.check(h)?;
    b.check(h)?;
    g_of(gamma)?;
    g_of(alpha_u)?;
    g_of(alpha_v)?;
    let (u, v) = (a.slot, b.slot);
    let (mu, cu) = h.marginal_slot(u);
    let (mv, cv) = h.marginal_slot(v);
    let cuv = h.cov()[(u, v)];
    // φ_v = mv + s1 z1 + s2 z2 with z1 shared by φ_u
    let s1 = cuv / cu.sqrt();
    let s2 = (cv - s1 * s1).max(0.0).sqrt();
    let l = truncation;
    let shape = vec![gamma / l as f64; l];
    let mut q_pairs = Vec::with_capacity(replicates);
    let mut g_pairs = Vec::with_capacity(replicates);
    let mut in_a = vec![false; l];
    let mut in_b = vec![false; l];
    let mut pa = vec![0.0; l];
    let mut pb = vec![0.0; l];
    for _ in 0..replicates {
        let beta = dist::dirichlet(&shape, rng)?;
        for k in 0..l {
            let z1 = dist::std_normal(rng);
            let z2 = dist::std_normal(rng);
            in_a[k] = a.contains(mu + cu.sqrt() * z1);
            in_b[k] = b.contains(mv + s1 * z1 + s2 * z2);
        }
        let qa: f64 = (0..l).filter(|&k| in_a[k]).map(|k| beta[k]).sum();
        let qb: f64 = (0..l).filter(|&k| in_b[k]).map(|k| beta[k]).sum();
        for k in 0..l {
            pa[k] = alpha_u * beta[k];
            pb[k] = alpha_v * beta[k];
        }
        let pi_u = dist::dirichlet(&pa, rng)?;
        let pi_v = dist::dirichlet(&pb, rng)?;
        let ga: f64 = (0..l).filter(|&k| in_a[k]).map(|k| pi_u[k]).sum();
        let gb: f64 = (0..l).filter(|&k| in_b[k]).map(|k| pi_v[k]).sum();
        q_pairs.push((qa, qb));
        g_pairs.push((ga, gb));
    }
    let [var_q_u, var_q_v, corr_q] = summarize(&q_pairs);
    let [var_g_u, var_g_v, corr_g] = summarize(&g_pairs);
    Ok(McMoments {
        var_q_u,
        var_q_v,
        corr_q,
        var_g_u,
        var_g_v,
        corr_g,
    })
}
