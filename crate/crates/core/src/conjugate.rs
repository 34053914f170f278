//! Closed-form Gaussian computations for atoms under a Gaussian base measure
//! and Gaussian observation noise.
//!
//! Posteriors are computed in the latent coordinates of the base measure
//! (`φ = μ + F z`), which handles the rank-one constant variant and the
//! full-rank variants with the same code.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::base_measure::BaseMeasure;
use crate::dist::{self, LN_2PI};
use crate::error::{Error, Result};

/// Per-slot counts and sums of the observations assigned to one component.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    n: Vec<usize>,
    sum: Vec<f64>,
}

impl SuffStats {
    pub fn new(m: usize) -> Self {
        Self {
            n: vec![0; m],
            sum: vec![0.0; m],
        }
    }

    pub fn from_obs<I: IntoIterator<Item = (usize, f64)>>(m: usize, obs: I) -> Self {
        let mut s = Self::new(m);
        for (u, y) in obs {
            s.add(u, y);
        }
        s
    }

    pub fn add(&mut self, u: usize, y: f64) {
        self.n[u] += 1;
        self.sum[u] += y;
    }

    pub fn remove(&mut self, u: usize, y: f64) {
        debug_assert!(self.n[u] > 0, "removing from an empty slot");
        self.n[u] -= 1;
        if self.n[u] == 0 {
            self.sum[u] = 0.0;
        } else {
            self.sum[u] -= y;
        }
    }

    /// Add `n` observations at slot `u` whose values sum to `sum`.
    pub fn add_many(&mut self, u: usize, n: usize, sum: f64) {
        self.n[u] += n;
        self.sum[u] += sum;
    }

    pub fn remove_many(&mut self, u: usize, n: usize, sum: f64) {
        debug_assert!(self.n[u] >= n, "removing more observations than present");
        self.n[u] -= n;
        if self.n[u] == 0 {
            self.sum[u] = 0.0;
        } else {
            self.sum[u] -= sum;
        }
    }

    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.iter().all(|&c| c == 0)
    }

    pub fn count(&self, u: usize) -> usize {
        self.n[u]
    }

    pub fn sum(&self, u: usize) -> f64 {
        self.sum[u]
    }

    pub fn counts(&self) -> &[usize] {
        &self.n
    }

    pub fn total(&self) -> usize {
        self.n.iter().sum()
    }
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "noise variance must be positive, got {sigma2}"
        )))
    }
}

/// Gaussian posterior of one atom in full coordinates.
#[derive(Debug, Clone)]
pub struct AtomPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Gaussian posterior of an atom's latent coordinates: precision
/// `I + Fᵀ diag(n) F / σ²` held through its lower Cholesky factor.
#[derive(Debug, Clone)]
pub struct LatentPosterior {
    zhat: DVector<f64>,
    /// `None` when no data is assigned: the posterior is the prior.
    chol: Option<DMatrix<f64>>,
}

impl LatentPosterior {
    pub fn new(h: &BaseMeasure, stats: &SuffStats, sigma2: f64) -> Result<Self> {
        check_sigma2(sigma2)?;
        let f = h.factor();
        let d = f.ncols();
        if stats.is_empty() {
            return Ok(Self {
                zhat: DVector::zeros(d),
                chol: None,
            });
        }
        let mu = h.mean();
        let mut prec = DMatrix::identity(d, d);
        let mut b = DVector::zeros(d);
        for u in 0..f.nrows() {
            let n = stats.n[u];
            if n == 0 {
                continue;
            }
            let w = n as f64 / sigma2;
            let r = (stats.sum[u] - n as f64 * mu[u]) / sigma2;
            for i in 0..d {
                let fi = f[(u, i)];
                if fi == 0.0 {
                    continue;
                }
                b[i] += fi * r;
                for j in 0..=i {
                    prec[(i, j)] += w * fi * f[(u, j)];
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                prec[(j, i)] = prec[(i, j)];
            }
        }
        let ch = prec
            .cholesky()
            .ok_or_else(|| Error::Numerical("atom posterior precision is singular".into()))?;
        let zhat = ch.solve(&b);
        Ok(Self {
            zhat,
            chol: Some(ch.l()),
        })
    }

    pub fn is_prior(&self) -> bool {
        self.chol.is_none()
    }

    /// Posterior `(mean, variance)` of slot `u`.
    pub fn slot(&self, h: &BaseMeasure, u: usize) -> (f64, f64) {
        match &self.chol {
            None => h.marginal_slot(u),
            Some(l) => {
                let f = h.factor();
                let row = f.row(u).transpose();
                let mean = h.mean()[u] + row.dot(&self.zhat);
                let w = l.solve_lower_triangular(&row).expect("nonsingular factor");
                (mean, w.norm_squared())
            }
        }
    }

    /// Posterior `(mean, variance)` of every slot.
    pub fn slots(&self, h: &BaseMeasure) -> Vec<(f64, f64)> {
        let m = h.len();
        match &self.chol {
            None => (0..m).map(|u| h.marginal_slot(u)).collect(),
            Some(l) => {
                let f = h.factor();
                let means = f * &self.zhat;
                let w = l
                    .solve_lower_triangular(&f.transpose())
                    .expect("nonsingular factor");
                (0..m)
                    .map(|u| (h.mean()[u] + means[u], w.column(u).norm_squared()))
                    .collect()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, h: &BaseMeasure, rng: &mut R) -> Vec<f64> {
        let l = match &self.chol {
            None => return h.sample_atom(rng),
            Some(l) => l,
        };
        let d = self.zhat.len();
        let eps = DVector::from_iterator(d, (0..d).map(|_| dist::std_normal(rng)));
        // z = ẑ + L⁻ᵀ ε has covariance (L Lᵀ)⁻¹
        let dz = l
            .tr_solve_lower_triangular(&eps)
            .expect("nonsingular factor");
        let z = &self.zhat + dz;
        let fz = h.factor() * z;
        h.mean().iter().zip(fz.iter()).map(|(m, x)| m + x).collect()
    }

    pub fn to_atom_posterior(&self, h: &BaseMeasure) -> AtomPosterior {
        let f = h.factor();
        match &self.chol {
            None => AtomPosterior {
                mean: DVector::from_column_slice(h.mean()),
                cov: h.cov().clone(),
            },
            Some(l) => {
                let w = l
                    .solve_lower_triangular(&f.transpose())
                    .expect("nonsingular factor");
                AtomPosterior {
                    mean: DVector::from_column_slice(h.mean()) + f * &self.zhat,
                    cov: w.transpose() * w,
                }
            }
        }
    }
}

pub fn atom_posterior(h: &BaseMeasure, stats: &SuffStats, sigma2: f64) -> Result<AtomPosterior> {
    Ok(LatentPosterior::new(h, stats, sigma2)?.to_atom_posterior(h))
}

/// `ln N(y; μ_u, Σ_uu + σ²)`, the prior predictive of one observation at `u`.
pub fn ln_predictive_new(h: &BaseMeasure, u: usize, y: f64, sigma2: f64) -> Result<f64> {
    check_sigma2(sigma2)?;
    let (m, v) = h.marginal_slot(u);
    Ok(dist::ln_normal_pdf(y, m, v + sigma2))
}

/// Log predictive density of `y` at slot `u` given the data summarized in
/// `others`, via the posterior slot marginal.
pub fn ln_predictive_existing(
    h: &BaseMeasure,
    others: &SuffStats,
    u: usize,
    y: f64,
    sigma2: f64,
) -> Result<f64> {
    let post = LatentPosterior::new(h, others, sigma2)?;
    let (m, v) = post.slot(h, u);
    Ok(dist::ln_normal_pdf(y, m, v + sigma2))
}

/// The same predictive evaluated through the full-coordinate precision
/// matrices `C⁻¹ = Σ⁻¹ + diag(n)/σ²` and `C₊⁻¹ = C⁻¹ + e_u e_uᵀ/σ²`:
///
/// `f = (2π)^{-1/2} σ⁻¹ (|C₊|/|C|)^{1/2} exp(-y²/2σ² + ½ b₊ᵀC₊b₊ - ½ bᵀCb)`
///
/// with `b = Σ⁻¹μ + s/σ²`. Needs a full-rank base measure.
pub fn ln_predictive_ratio_form(
    h: &BaseMeasure,
    others: &SuffStats,
    u: usize,
    y: f64,
    sigma2: f64,
) -> Result<f64> {
    check_sigma2(sigma2)?;
    if h.is_constant() {
        return Err(Error::Unsupported(
            "ratio form needs an invertible prior covariance".into(),
        ));
    }
    let m = h.len();
    let sigma_inv = h
        .cov()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("prior covariance is singular".into()))?;
    let mu = DVector::from_column_slice(h.mean());
    let mut c_inv = sigma_inv.clone();
    let mut b = &sigma_inv * &mu;
    for v in 0..m {
        c_inv[(v, v)] += others.count(v) as f64 / sigma2;
        b[v] += others.sum(v) / sigma2;
    }
    let mut c_plus_inv = c_inv.clone();
    c_plus_inv[(u, u)] += 1.0 / sigma2;
    let mut b_plus = b.clone();
    b_plus[u] += y / sigma2;

    let quad = |p: &DMatrix<f64>, b: &DVector<f64>| -> Result<(f64, f64)> {
        let lu = p.clone().lu();
        let x = lu
            .solve(b)
            .ok_or_else(|| Error::Numerical("singular posterior precision".into()))?;
        Ok((b.dot(&x), lu.determinant().ln()))
    };
    let (q, ln_det_c_inv) = quad(&c_inv, &b)?;
    let (q_plus, ln_det_c_plus_inv) = quad(&c_plus_inv, &b_plus)?;
    Ok(
        -0.5 * LN_2PI - 0.5 * sigma2.ln() + 0.5 * (ln_det_c_inv - ln_det_c_plus_inv)
            - 0.5 * y * y / sigma2
            + 0.5 * q_plus
            - 0.5 * q,
    )
}

/// Summary of a block of observations that all sit in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotBlock {
    pub n: usize,
    pub mean: f64,
    /// Sum of squared deviations from `mean`.
    pub ss: f64,
}

impl SlotBlock {
    pub fn from_values(ys: &[f64]) -> Self {
        let n = ys.len();
        if n == 0 {
            return Self {
                n: 0,
                mean: 0.0,
                ss: 0.0,
            };
        }
        let mean = ys.iter().sum::<f64>() / n as f64;
        let ss = ys.iter().map(|y| (y - mean) * (y - mean)).sum();
        Self { n, mean, ss }
    }
}

/// Joint log density of a single-slot block under `φ_u ~ N(m, c)`:
///
/// `-n/2 ln(2πσ²) - ½ ln(1 + nc/σ²) - ss/2σ² - n(ȳ - m)² / 2(σ² + nc)`.
pub fn ln_block_given_slot(block: &SlotBlock, m: f64, c: f64, sigma2: f64) -> f64 {
    let n = block.n as f64;
    if block.n == 0 {
        return 0.0;
    }
    let d = block.mean - m;
    -0.5 * n * (LN_2PI + sigma2.ln())
        - 0.5 * (n * c / sigma2).ln_1p()
        - 0.5 * block.ss / sigma2
        - 0.5 * n * d * d / (sigma2 + n * c)
}

/// Joint log predictive density of a block of `(slot, value)` observations
/// given the data in `others`. An empty `others` gives the prior predictive
/// `∫ ∏ F(y|φ_u) H(dφ)`.
pub fn ln_predictive_block(
    h: &BaseMeasure,
    others: &SuffStats,
    block: &[(usize, f64)],
    sigma2: f64,
) -> Result<f64> {
    if block.is_empty() {
        return Err(Error::Parameter("predictive block is empty".into()));
    }
    let post = LatentPosterior::new(h, others, sigma2)?;
    let u0 = block[0].0;
    if block.iter().all(|&(u, _)| u == u0) {
        let ys: Vec<f64> = block.iter().map(|&(_, y)| y).collect();
        let (m, c) = post.slot(h, u0);
        return Ok(ln_block_given_slot(
            &SlotBlock::from_values(&ys),
            m,
            c,
            sigma2,
        ));
    }
    // y ~ N(A m̃, A Σ̃ Aᵀ + σ² I) with A selecting the block's slots
    let ap = post.to_atom_posterior(h);
    let b = block.len();
    let cov = DMatrix::from_fn(b, b, |i, j| {
        ap.cov[(block[i].0, block[j].0)] + if i == j { sigma2 } else { 0.0 }
    });
    let resid = DVector::from_iterator(b, block.iter().map(|&(u, y)| y - ap.mean[u]));
    let ch = cov
        .cholesky()
        .ok_or_else(|| Error::Numerical("block predictive covariance not PD".into()))?;
    let l = ch.l();
    let w = l
        .solve_lower_triangular(&resid)
        .expect("nonsingular factor");
    let log_det: f64 = (0..b).map(|i| l[(i, i)].ln()).sum();
    Ok(-0.5 * b as f64 * LN_2PI - log_det - 0.5 * w.norm_squared())
}

/// One systematic scan of single-slot Gibbs updates of `atom` under its
/// posterior: slot `u` given the rest is `N(m_c, v_c)` from the base
/// measure, combined with the slot's data.
pub fn gibbs_slots<R: Rng + ?Sized>(
    h: &BaseMeasure,
    atom: &mut [f64],
    stats: &SuffStats,
    sigma2: f64,
    rng: &mut R,
) -> Result<()> {
    check_sigma2(sigma2)?;
    for u in 0..atom.len() {
        let (mc, vc) = h.conditional_slot(atom, u)?;
        let prec = 1.0 / vc + stats.count(u) as f64 / sigma2;
        let mean = (mc / vc + stats.sum(u) / sigma2) / prec;
        atom[u] = mean + dist::std_normal(rng) / prec.sqrt();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CovariateGrid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line_gp(xs: &[f64], s2: f64, om: f64) -> BaseMeasure {
        let grid = CovariateGrid::new(xs.iter().map(|&x| vec![x]).collect()).unwrap();
        BaseMeasure::gp(&grid, 0.0, s2, om).unwrap()
    }

    #[test]
    fn empty_stats_give_prior_exactly() {
        let h = line_gp(&[0.0, 1.0, 2.5], 1.3, 0.2);
        let p = atom_posterior(&h, &SuffStats::new(3), 0.1).unwrap();
        assert_eq!(p.cov, *h.cov());
        assert_eq!(p.mean.as_slice(), h.mean());
        for u in 0..3 {
            assert_eq!(
                ln_predictive_existing(&h, &SuffStats::new(3), u, 0.7, 0.1).unwrap(),
                ln_predictive_new(&h, u, 0.7, 0.1).unwrap()
            );
        }
    }

    #[test]
    fn univariate_conjugate_posterior() {
        let h = line_gp(&[0.0], 1.0, 1.0);
        let s = SuffStats::from_obs(1, [(0, 2.0)]);
        let p = atom_posterior(&h, &s, 1.0).unwrap();
        assert!((p.mean[0] - 1.0).abs() < 1e-12);
        assert!((p.cov[(0, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn predictive_new_value_and_tails() {
        let h = line_gp(&[0.0], 1.0, 1.0);
        let d = ln_predictive_new(&h, 0, 0.0, 0.01).unwrap().exp();
        assert!((d - 0.396_962).abs() < 1e-6);
        assert!((d - 1.0 / (2.0 * std::f64::consts::PI * 1.01).sqrt()).abs() < 1e-15);
        assert!(ln_predictive_new(&h, 0, 1e3, 0.01).unwrap().exp() < 1e-300);
        assert!(ln_predictive_new(&h, 0, 0.0, 0.0).is_err());
        assert!(ln_predictive_existing(&h, &SuffStats::new(1), 0, 0.0, -1.0).is_err());
    }

    #[test]
    fn predictive_new_integrates_to_one() {
        let h = line_gp(&[0.0], 1.0, 1.0);
        let (lo, hi, n) = (-12.0, 12.0, 4000);
        let dx = (hi - lo) / n as f64;
        let total: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * ln_predictive_new(&h, 0, lo + i as f64 * dx, 0.01)
                    .unwrap()
                    .exp()
            })
            .sum::<f64>()
            * dx;
        assert!((total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn univariate_predictive_by_hand() {
        // prior N(0,1), σ_ε = 0.1, one other observation at 1: posterior
        // N(1/1.01, 0.01/1.01), predictive N(1/1.01, 0.01/1.01 + 0.01).
        let h = line_gp(&[0.0], 1.0, 1.0);
        let s = SuffStats::from_obs(1, [(0, 1.0)]);
        let lp = ln_predictive_existing(&h, &s, 0, 1.0, 0.01).unwrap();
        let direct = dist::ln_normal_pdf(1.0, 1.0 / 1.01, 0.01 / 1.01 + 0.01);
        assert!((lp.exp() - direct.exp()).abs() / direct.exp() < 1e-8);
    }

    #[test]
    fn posterior_mean_matches_quadrature_m2() {
        let h = line_gp(&[0.0, 1.0], 1.0, 0.5);
        let sigma2 = 0.5;
        let obs = [(0, 0.8), (0, 1.1), (1, -0.2)];
        let s = SuffStats::from_obs(2, obs);
        let p = atom_posterior(&h, &s, sigma2).unwrap();
        let (lo, hi, n) = (-6.0, 6.0, 300);
        let dx = (hi - lo) / n as f64;
        let (mut z, mut m0, mut m1) = (0.0, 0.0, 0.0);
        for i in 0..=n {
            for j in 0..=n {
                let phi = [lo + i as f64 * dx, lo + j as f64 * dx];
                let lw = h.log_density(&phi).unwrap()
                    + obs
                        .iter()
                        .map(|&(u, y)| dist::ln_normal_pdf(y, phi[u], sigma2))
                        .sum::<f64>();
                let w = lw.exp();
                z += w;
                m0 += w * phi[0];
                m1 += w * phi[1];
            }
        }
        assert!((m0 / z - p.mean[0]).abs() < 1e-4);
        assert!((m1 / z - p.mean[1]).abs() < 1e-4);
    }

    #[test]
    fn posterior_variance_shrinks_with_data() {
        let h = line_gp(&[0.0, 0.5, 3.0], 1.0, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = SuffStats::new(3);
        let mut prev = atom_posterior(&h, &s, 0.2).unwrap().cov;
        for _ in 0..30 {
            let u = rng.random_range(0..3);
            s.add(u, dist::std_normal(&mut rng));
            let next = atom_posterior(&h, &s, 0.2).unwrap().cov;
            assert!(next[(u, u)] <= prev[(u, u)] + 1e-15);
            prev = next;
        }
    }

    #[test]
    fn ratio_form_matches_shortcut() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let m = rng.random_range(1..=5);
            let xs: Vec<f64> = (0..m)
                .map(|i| i as f64 + rng.random::<f64>() * 0.5)
                .collect();
            let h = line_gp(&xs, 0.5 + rng.random::<f64>(), 0.1 + rng.random::<f64>());
            let sigma2 = 0.05 + rng.random::<f64>();
            let mut s = SuffStats::new(m);
            for u in 0..m {
                for _ in 0..rng.random_range(0..4) {
                    s.add(u, 2.0 * dist::std_normal(&mut rng));
                }
            }
            let u = rng.random_range(0..m);
            let y = 2.0 * dist::std_normal(&mut rng);
            let a = ln_predictive_existing(&h, &s, u, y, sigma2).unwrap();
            let b = ln_predictive_ratio_form(&h, &s, u, y, sigma2).unwrap();
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn ratio_form_rejects_constant_variant() {
        let h = BaseMeasure::constant(&CovariateGrid::regular_1d(2), 0.0, 1.0).unwrap();
        assert!(matches!(
            ln_predictive_ratio_form(&h, &SuffStats::new(2), 0, 0.0, 1.0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn singleton_block_is_predictive_existing() {
        let h = line_gp(&[0.0, 1.0, 2.0], 1.0, 0.3);
        let s = SuffStats::from_obs(3, [(0, 0.4), (2, -1.0), (2, -0.7)]);
        let a = ln_predictive_block(&h, &s, &[(1, 0.3)], 0.1).unwrap();
        let b = ln_predictive_existing(&h, &s, 1, 0.3, 0.1).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn block_chain_rule_same_slot() {
        let h = line_gp(&[0.0, 1.0], 1.0, 0.3);
        let mut s = SuffStats::from_obs(2, [(1, 0.9)]);
        let joint = ln_predictive_block(&h, &s, &[(0, 0.5), (0, 0.7)], 0.2).unwrap();
        let first = ln_predictive_existing(&h, &s, 0, 0.5, 0.2).unwrap();
        s.add(0, 0.5);
        let second = ln_predictive_existing(&h, &s, 0, 0.7, 0.2).unwrap();
        assert!((joint - (first + second)).abs() < 1e-10 * joint.abs().max(1.0));
    }

    #[test]
    fn block_chain_rule_across_slots_and_orders() {
        let h = line_gp(&[0.0, 1.0, 2.0], 1.0, 0.3);
        let base = SuffStats::from_obs(3, [(1, 0.9), (2, 0.1)]);
        let block = [(0, 0.5), (2, 0.7), (1, -0.3), (0, 0.2)];
        let joint = ln_predictive_block(&h, &base, &block, 0.2).unwrap();
        for order in [[0, 1, 2, 3], [3, 2, 1, 0], [1, 3, 0, 2]] {
            let mut s = base.clone();
            let mut total = 0.0;
            for &i in &order {
                let (u, y) = block[i];
                total += ln_predictive_existing(&h, &s, u, y, 0.2).unwrap();
                s.add(u, y);
            }
            assert!((joint - total).abs() < 1e-10 * joint.abs().max(1.0));
        }
    }

    #[test]
    fn constant_block_matches_one_dimensional_integral() {
        let h = BaseMeasure::constant(&CovariateGrid::regular_1d(2), 0.2, 1.5).unwrap();
        let sigma2 = 0.3;
        let block = [(0, 0.4), (1, 0.9), (1, 0.6)];
        let lp = ln_predictive_block(&h, &SuffStats::new(2), &block, sigma2).unwrap();
        let (lo, hi, n) = (-10.0, 10.0, 20_000);
        let dx = (hi - lo) / n as f64;
        let integral: f64 = (0..=n)
            .map(|i| {
                let x = lo + i as f64 * dx;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                let l = dist::ln_normal_pdf(x, 0.2, 1.5)
                    + block
                        .iter()
                        .map(|&(_, y)| dist::ln_normal_pdf(y, x, sigma2))
                        .sum::<f64>();
                w * l.exp()
            })
            .sum::<f64>()
            * dx;
        assert!((lp.exp() - integral).abs() / integral < 1e-6);
    }

    #[test]
    fn predictive_exchangeable_in_conditioning_set() {
        let h = line_gp(&[0.0, 1.0, 2.0], 1.0, 0.3);
        let obs = [(0, 0.5), (2, 0.7), (1, -0.3), (0, 0.2), (2, 1.1)];
        let a = SuffStats::from_obs(3, obs);
        let b = SuffStats::from_obs(3, obs.iter().rev().copied());
        let pa = ln_predictive_existing(&h, &a, 1, 0.1, 0.2).unwrap();
        let pb = ln_predictive_existing(&h, &b, 1, 0.1, 0.2).unwrap();
        assert!((pa - pb).abs() < 1e-12);
    }

    #[test]
    fn empty_block_rejected() {
        let h = line_gp(&[0.0], 1.0, 1.0);
        assert!(ln_predictive_block(&h, &SuffStats::new(1), &[], 1.0).is_err());
    }

    #[test]
    fn slots_agree_with_slot() {
        let h = line_gp(&[0.0, 1.0, 2.0, 4.0], 1.0, 0.3);
        let s = SuffStats::from_obs(4, [(0, 0.5), (2, 0.7), (2, 0.1)]);
        let p = LatentPosterior::new(&h, &s, 0.2).unwrap();
        let all = p.slots(&h);
        let ap = p.to_atom_posterior(&h);
        for u in 0..4 {
            let (m, v) = p.slot(&h, u);
            assert!((m - all[u].0).abs() < 1e-12 && (v - all[u].1).abs() < 1e-12);
            assert!((m - ap.mean[u]).abs() < 1e-12 && (v - ap.cov[(u, u)]).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_sample_moments() {
        let h = line_gp(&[0.0], 1.0, 1.0);
        let s = SuffStats::from_obs(1, [(0, 2.0)]);
        let p = LatentPosterior::new(&h, &s, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 40_000;
        let xs: Vec<f64> = (0..n).map(|_| p.sample(&h, &mut rng)[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.0).abs() < 3.0 * (0.5 / n as f64).sqrt());
        assert!((var - 0.5).abs() < 3.0 * 0.5 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn slot_gibbs_matches_exact_posterior() {
        let grid = CovariateGrid::regular_1d(3);
        let h = BaseMeasure::markov_chain(&grid, 0.0, 1.0, 0.5).unwrap();
        let s = SuffStats::from_obs(3, [(0, 1.0), (0, 1.2), (2, -0.5)]);
        let sigma2 = 0.5;
        let exact = atom_posterior(&h, &s, sigma2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut atom = h.sample_atom(&mut rng);
        let n = 60_000;
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        for _ in 0..500 {
            gibbs_slots(&h, &mut atom, &s, sigma2, &mut rng).unwrap();
        }
        for _ in 0..n {
            gibbs_slots(&h, &mut atom, &s, sigma2, &mut rng).unwrap();
            for u in 0..3 {
                sum[u] += atom[u];
                sq[u] += atom[u] * atom[u];
            }
        }
        for u in 0..3 {
            let mean = sum[u] / n as f64;
            let var = sq[u] / n as f64 - mean * mean;
            // autocorrelated draws: allow a generous effective-size factor
            let se = (exact.cov[(u, u)] / n as f64 * 10.0).sqrt();
            assert!((mean - exact.mean[u]).abs() < 3.0 * se, "slot {u}");
            assert!((var - exact.cov[(u, u)]).abs() < 0.05 * exact.cov[(u, u)]);
        }
    }
}
