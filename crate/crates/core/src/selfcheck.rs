//! Quick oracle suite behind the `selfcheck` command. Every check computes
//! one quantity along two independent routes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::base_measure::BaseMeasure;
use crate::bvn::bvn_upper;
use crate::combinatorics::{log_stirling1, table_count_probs};
use crate::conjugate::{
    ln_predictive_existing, ln_predictive_new, ln_predictive_ratio_form, SuffStats,
};
use crate::dist;
use crate::model::{CovariateGrid, HyperParams};
use crate::moments::{self, EventRect};
use crate::run::{run_chain, SamplerKind, Schedule};
use crate::sampler::SamplerOptions;
use crate::simulate::gen_two_group;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn random_gp<R: Rng>(rng: &mut R) -> BaseMeasure {
    let m = rng.random_range(1..=3);
    let grid = CovariateGrid::new(
        (0..m)
            .map(|u| vec![u as f64 * rng.random_range(0.2..2.0)])
            .collect(),
    )
    .expect("grid");
    BaseMeasure::gp(
        &grid,
        rng.random_range(-1.0..1.0),
        rng.random_range(0.3..2.0),
        rng.random_range(0.05..1.0),
    )
    .expect("gp")
}

fn random_stats<R: Rng>(h: &BaseMeasure, rng: &mut R) -> SuffStats {
    let obs: Vec<(usize, f64)> = (0..rng.random_range(0..6))
        .map(|_| (rng.random_range(0..h.len()), rng.random_range(-2.0..2.0)))
        .collect();
    SuffStats::from_obs(h.len(), obs)
}

fn ratio_form() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let h = random_gp(&mut rng);
        let stats = random_stats(&h, &mut rng);
        let (u, y, s2) = (
            rng.random_range(0..h.len()),
            rng.random_range(-2.0..2.0),
            rng.random_range(0.05..1.0),
        );
        let a = ln_predictive_existing(&h, &stats, u, y, s2)
            .unwrap_or(f64::NAN)
            .exp();
        let b = ln_predictive_ratio_form(&h, &stats, u, y, s2)
            .unwrap_or(f64::NAN)
            .exp();
        worst = worst.max(rel(b, a));
    }
    check(
        "predictive ratio form vs shortcut",
        worst < 1e-10,
        format!("max rel err {worst:.2e}"),
    )
}

/// Composite Simpson rule on `[lo, hi]` with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    (f(lo) + f(hi) + inner) * h / 3.0
}

fn predictive_quadrature() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let h = random_gp(&mut rng);
        let (u, y, s2) = (
            rng.random_range(0..h.len()),
            rng.random_range(-2.0..2.0),
            rng.random_range(0.05..1.0),
        );
        let (m, c) = h.marginal_slot(u);
        let sd = c.sqrt();
        let f = |phi: f64| (dist::ln_normal_pdf(y, phi, s2) + dist::ln_normal_pdf(phi, m, c)).exp();
        let q = simpson(f, m - 12.0 * sd, m + 12.0 * sd, 4000);
        let a = ln_predictive_new(&h, u, y, s2).unwrap_or(f64::NAN).exp();
        worst = worst.max(rel(a, q));
    }
    check(
        "prior predictive vs quadrature",
        worst < 1e-6,
        format!("max rel err {worst:.2e}"),
    )
}

fn stirling_identity() -> Check {
    let mut worst: f64 = 0.0;
    for n in 1..=50usize {
        for a in [0.3, 1.0, 4.5] {
            let terms: Vec<f64> = (0..=n)
                .map(|m| log_stirling1(n, m) + m as f64 * f64::ln(a))
                .collect();
            let lhs = dist::log_sum_exp(&terms);
            let rhs = dist::ln_gamma(a + n as f64) - dist::ln_gamma(a);
            worst = worst.max(rel(lhs.exp(), rhs.exp()));
        }
    }
    check(
        "Stirling rising-factorial identity",
        worst < 1e-9,
        format!("max rel err {worst:.2e}"),
    )
}

fn antoniak() -> Check {
    let (n, a, draws) = (10, 1.0, 100_000);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut hist = vec![0usize; n + 1];
    for _ in 0..draws {
        let tables = (0..n)
            .filter(|&i| rng.random::<f64>() < a / (a + i as f64))
            .count();
        hist[tables] += 1;
    }
    let probs = table_count_probs(n, a).unwrap_or_default();
    let tv = 0.5
        * probs
            .iter()
            .zip(&hist)
            .map(|(p, &c)| (p - c as f64 / draws as f64).abs())
            .sum::<f64>();
    check(
        "table counts vs restaurant simulation",
        tv < 0.02,
        format!("TV {tv:.4}"),
    )
}

fn bvn_orthant() -> Check {
    let worst = [-0.99, -0.6, 0.0, 0.3, 0.95]
        .iter()
        .map(|&r: &f64| {
            (bvn_upper(0.0, 0.0, r) - (0.25 + r.asin() / (2.0 * std::f64::consts::PI))).abs()
        })
        .fold(0.0, f64::max);
    check(
        "bivariate normal orthant",
        worst < 1e-12,
        format!("max abs err {worst:.2e}"),
    )
}

fn moments_mc() -> Check {
    let grid = CovariateGrid::new(vec![vec![0.0], vec![2.0]]).expect("grid");
    let h = BaseMeasure::gp(&grid, 0.0, 1.0, 0.5).expect("gp");
    let a = EventRect::new(0, f64::NEG_INFINITY, 0.0).expect("rect");
    let b = EventRect::new(1, f64::NEG_INFINITY, 0.0).expect("rect");
    let (gamma, alpha) = (1.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let closed = (
        moments::var_q(&h, gamma, &a),
        moments::corr_q(&h, &a, &b),
        moments::var_g(&h, gamma, alpha, &a),
        moments::corr_g(&h, gamma, alpha, alpha, &a, &b),
    );
    match (
        closed,
        moments::mc_truncated(&h, gamma, alpha, alpha, &a, &b, 500, 4000, &mut rng),
    ) {
        ((Ok(vq), Ok(cq), Ok(vg), Ok(cg)), Ok(mc)) => {
            let z = [
                (vq, mc.var_q_u),
                (cq, mc.corr_q),
                (vg, mc.var_g_u),
                (cg, mc.corr_g),
            ]
            .iter()
            .map(|(c, e)| (c - e.value).abs() / e.se)
            .fold(0.0, f64::max);
            check(
                "moment formulas vs truncated simulation",
                z < 3.0,
                format!("max |z| {z:.2}"),
            )
        }
        _ => check(
            "moment formulas vs truncated simulation",
            false,
            "evaluation failed".into(),
        ),
    }
}

fn sampler_invariants() -> Check {
    let syn = match gen_two_group(15, 6, 9) {
        Ok(s) => s,
        Err(e) => return check("sampler count invariants", false, e.to_string()),
    };
    let h = BaseMeasure::gp(&syn.grid, 0.0, 1.0, 0.05).expect("gp");
    let hp = HyperParams::fixed(1.0, 1.0, 0.05, syn.grid.len());
    let opts = SamplerOptions {
        debug_checks: true,
        ..SamplerOptions::default()
    };
    let sch = Schedule {
        sweeps: 50,
        burnin: 0,
        thin: 1,
    };
    for kind in [SamplerKind::Conditional, SamplerKind::Marginal] {
        let a = run_chain(&syn.data, &h, &hp, opts, kind, &sch, 3, 0);
        let b = run_chain(&syn.data, &h, &hp, opts, kind, &sch, 3, 0);
        match (a, b) {
            (Ok(a), Ok(b)) if a == b => {}
            (Err(e), _) | (_, Err(e)) => {
                return check(
                    "sampler count invariants",
                    false,
                    format!("{}: {e}", kind.name()),
                )
            }
            _ => {
                return check(
                    "sampler count invariants",
                    false,
                    format!("{}: not reproducible", kind.name()),
                )
            }
        }
    }
    check(
        "sampler count invariants",
        true,
        "50 checked sweeps per sampler, reproducible".into(),
    )
}

pub fn run_all() -> Vec<Check> {
    vec![
        ratio_form(),
        predictive_quadrature(),
        stirling_identity(),
        antoniak(),
        bvn_orthant(),
        moments_mc(),
        sampler_invariants(),
    ]
}
