//! Core domain types: the covariate grid, grouped observations, hyperparameters,
//! count bookkeeping and stick-breaking weights.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist;
use crate::error::{Error, Result};

/// Tolerance for the simplex constraint on stick weights.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Ordered covariate locations; slot `u` always refers to `points[u]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateGrid {
    points: Vec<Vec<f64>>,
}

impl CovariateGrid {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Parameter(
                "covariate grid needs at least one point".into(),
            ));
        }
        let r = points[0].len();
        if r == 0 {
            return Err(Error::Parameter(
                "covariate points need dimension >= 1".into(),
            ));
        }
        for (u, p) in points.iter().enumerate() {
            if p.len() != r {
                return Err(Error::Parameter(format!(
                    "grid point {u} has dimension {} but expected {r}",
                    p.len()
                )));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::Parameter(format!("grid point {u} is not finite")));
            }
        }
        for u in 0..points.len() {
            for v in 0..u {
                if points[u] == points[v] {
                    return Err(Error::Parameter(format!(
                        "grid points {v} and {u} coincide"
                    )));
                }
            }
        }
        Ok(Self { points })
    }

    /// Grid `{1, 2, ..., m}` on the real line.
    pub fn regular_1d(m: usize) -> Self {
        Self::new((1..=m).map(|i| vec![i as f64]).collect()).expect("distinct points")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn point(&self, u: usize) -> &[f64] {
        &self.points[u]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Euclidean distance between slots.
    pub fn distance(&self, u: usize, v: usize) -> f64 {
        self.points[u]
            .iter()
            .zip(&self.points[v])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Scalar observations grouped by grid slot.
///
/// Stream ids are evaluation metadata; no inference routine reads them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedDataset {
    groups: Vec<Vec<f64>>,
    streams: Option<Vec<Vec<u64>>>,
}

impl GroupedDataset {
    pub fn new(groups: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_streams(groups, None)
    }

    pub fn with_streams(groups: Vec<Vec<f64>>, streams: Option<Vec<Vec<u64>>>) -> Result<Self> {
        for (u, g) in groups.iter().enumerate() {
            if let Some(i) = g.iter().position(|y| !y.is_finite()) {
                return Err(Error::Data(format!("observation ({u},{i}) is not finite")));
            }
        }
        if let Some(s) = &streams {
            if s.len() != groups.len() || s.iter().zip(&groups).any(|(a, b)| a.len() != b.len()) {
                return Err(Error::Data(
                    "stream ids must match the observation layout".into(),
                ));
            }
        }
        Ok(Self { groups, streams })
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group(&self, u: usize) -> &[f64] {
        &self.groups[u]
    }

    pub fn groups(&self) -> &[Vec<f64>] {
        &self.groups
    }

    pub fn n_u(&self, u: usize) -> usize {
        self.groups[u].len()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn streams(&self) -> Option<&[Vec<u64>]> {
        self.streams.as_deref()
    }

    /// Same observations with the stream metadata stripped.
    pub fn without_streams(&self) -> Self {
        Self {
            groups: self.groups.clone(),
            streams: None,
        }
    }
}

/// Gamma prior with shape/rate parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

/// Inverse-gamma prior with shape/scale parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvGammaPrior {
    pub shape: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Top-level concentration.
    pub gamma: f64,
    /// Per-group concentrations.
    pub alpha: Vec<f64>,
    /// Observation noise variance.
    pub sigma2_eps: f64,
    pub gamma_prior: GammaPrior,
    pub alpha_prior: GammaPrior,
    pub sigma2_prior: InvGammaPrior,
    pub resample_gamma: bool,
    pub resample_alpha: bool,
    pub resample_sigma2: bool,
    pub shared_alpha: bool,
}

impl HyperParams {
    /// Fixed-value hyperparameters with no resampling.
    pub fn fixed(gamma: f64, alpha: f64, sigma2_eps: f64, n_groups: usize) -> Self {
        Self {
            gamma,
            alpha: vec![alpha; n_groups],
            sigma2_eps,
            gamma_prior: GammaPrior {
                shape: 1.0,
                rate: 1.0,
            },
            alpha_prior: GammaPrior {
                shape: 1.0,
                rate: 1.0,
            },
            sigma2_prior: InvGammaPrior {
                shape: 1.0,
                scale: 1.0,
            },
            resample_gamma: false,
            resample_alpha: false,
            resample_sigma2: false,
            shared_alpha: true,
        }
    }

    pub fn validate(&self, n_groups: usize) -> Result<()> {
        let pos = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!(
                    "{name} must be positive, got {x}"
                )))
            }
        };
        pos("gamma", self.gamma)?;
        pos("sigma2_eps", self.sigma2_eps)?;
        pos("gamma prior shape", self.gamma_prior.shape)?;
        pos("gamma prior rate", self.gamma_prior.rate)?;
        pos("alpha prior shape", self.alpha_prior.shape)?;
        pos("alpha prior rate", self.alpha_prior.rate)?;
        pos("sigma2 prior shape", self.sigma2_prior.shape)?;
        pos("sigma2 prior scale", self.sigma2_prior.scale)?;
        if self.alpha.len() != n_groups {
            return Err(Error::Parameter(format!(
                "expected {n_groups} alpha values, got {}",
                self.alpha.len()
            )));
        }
        for &a in &self.alpha {
            pos("alpha", a)?;
        }
        if self.shared_alpha && self.alpha.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::Parameter(
                "shared alpha requested but alpha values differ".into(),
            ));
        }
        Ok(())
    }
}

/// Occupancy counts of a sampler state.
///
/// `n_ut` is indexed `[u][t]` over all instances; for the conditional sampler,
/// which carries no instance indices, it is empty.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountStats {
    pub n_u: Vec<usize>,
    pub n_ut: Vec<Vec<usize>>,
    pub n_uk: Vec<Vec<usize>>,
    pub m_u: Vec<usize>,
    pub m_uk: Vec<Vec<usize>>,
    pub q_k: Vec<usize>,
    pub q_total: usize,
    pub k: usize,
}

impl CountStats {
    /// Check the summation identities between the count tables.
    pub fn check(&self) -> Result<()> {
        let groups = self.n_u.len();
        let bad = |msg: String| Err(Error::Corruption(msg));
        if self.n_uk.len() != groups || self.m_uk.len() != groups || self.m_u.len() != groups {
            return bad("count tables have inconsistent group dimension".into());
        }
        for u in 0..groups {
            if self.n_uk[u].iter().sum::<usize>() != self.n_u[u] {
                return bad(format!("sum_k n_uk != n_u at group {u}"));
            }
            if !self.n_ut.is_empty() && self.n_ut[u].iter().sum::<usize>() != self.n_u[u] {
                return bad(format!("sum_t n_ut != n_u at group {u}"));
            }
            if self.m_uk[u].iter().sum::<usize>() != self.m_u[u] {
                return bad(format!("sum_k m_uk != m_u at group {u}"));
            }
        }
        for (k, &q) in self.q_k.iter().enumerate() {
            let s: usize = self.m_uk.iter().map(|row| row[k]).sum();
            if s != q {
                return bad(format!("q_k != sum_u m_uk for component {k}"));
            }
        }
        if self.q_k.iter().sum::<usize>() != self.q_total {
            return bad("q_total != sum_k q_k".into());
        }
        if self.q_k.iter().filter(|&&q| q > 0).count() != self.k {
            return bad("K does not equal the number of components with q_k > 0".into());
        }
        Ok(())
    }
}

/// Counts for a direct-assignment state: component labels `z[u][i]` plus table counts `m_uk`.
pub fn counts_from_assignments(
    z: &[Vec<usize>],
    m_uk: &[Vec<usize>],
    n_components: usize,
) -> Result<CountStats> {
    let groups = z.len();
    if m_uk.len() != groups {
        return Err(Error::Corruption(format!(
            "table counts cover {} groups, assignments cover {groups}",
            m_uk.len()
        )));
    }
    let mut n_uk = vec![vec![0; n_components]; groups];
    for (u, zu) in z.iter().enumerate() {
        for (i, &k) in zu.iter().enumerate() {
            if k >= n_components {
                return Err(Error::Corruption(format!(
                    "z[{u}][{i}] = {k} but only {n_components} components exist"
                )));
            }
            n_uk[u][k] += 1;
        }
        if m_uk[u].len() != n_components {
            return Err(Error::Corruption(format!(
                "m_uk row {u} has {} entries, expected {n_components}",
                m_uk[u].len()
            )));
        }
    }
    let q_k: Vec<usize> = (0..n_components)
        .map(|k| m_uk.iter().map(|row| row[k]).sum())
        .collect();
    Ok(CountStats {
        n_u: z.iter().map(Vec::len).collect(),
        n_ut: Vec::new(),
        n_uk,
        m_u: m_uk.iter().map(|row| row.iter().sum()).collect(),
        m_uk: m_uk.to_vec(),
        q_total: q_k.iter().sum(),
        k: q_k.iter().filter(|&&q| q > 0).count(),
        q_k,
    })
}

/// Counts for an instance-indexed state: `t[u][i]` names an instance, `k_of_t[t]` its component.
pub fn counts_from_indices(
    t: &[Vec<usize>],
    k_of_t: &[usize],
    n_components: usize,
) -> Result<CountStats> {
    let groups = t.len();
    let n_inst = k_of_t.len();
    for (tt, &k) in k_of_t.iter().enumerate() {
        if k >= n_components {
            return Err(Error::Corruption(format!(
                "k[{tt}] = {k} but only {n_components} components exist"
            )));
        }
    }
    let mut n_ut = vec![vec![0; n_inst]; groups];
    let mut n_uk = vec![vec![0; n_components]; groups];
    for (u, tu) in t.iter().enumerate() {
        for (i, &inst) in tu.iter().enumerate() {
            if inst >= n_inst {
                return Err(Error::Corruption(format!(
                    "t[{u}][{i}] = {inst} but only {n_inst} instances exist"
                )));
            }
            n_ut[u][inst] += 1;
            n_uk[u][k_of_t[inst]] += 1;
        }
    }
    let mut m_uk = vec![vec![0; n_components]; groups];
    for u in 0..groups {
        for (inst, &n) in n_ut[u].iter().enumerate() {
            if n > 0 {
                m_uk[u][k_of_t[inst]] += 1;
            }
        }
    }
    let mut q_k = vec![0; n_components];
    for &k in k_of_t {
        q_k[k] += 1;
    }
    Ok(CountStats {
        n_u: t.iter().map(Vec::len).collect(),
        m_u: m_uk.iter().map(|row| row.iter().sum()).collect(),
        n_ut,
        n_uk,
        m_uk,
        q_total: q_k.iter().sum(),
        k: q_k.iter().filter(|&&q| q > 0).count(),
        q_k,
    })
}

/// Weights over the `K` represented components plus the unrepresented remainder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StickWeights {
    pub weights: Vec<f64>,
    pub remainder: f64,
}

impl StickWeights {
    /// All mass on the remainder.
    pub fn empty() -> Self {
        Self {
            weights: Vec::new(),
            remainder: 1.0,
        }
    }

    /// Split a probability vector of length K+1 into weights and remainder.
    pub fn from_vec(mut probs: Vec<f64>) -> Result<Self> {
        let remainder = probs
            .pop()
            .ok_or_else(|| Error::Parameter("stick weights need at least one entry".into()))?;
        let s = Self {
            weights: probs,
            remainder,
        };
        s.check()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum::<f64>() + self.remainder
    }

    pub fn check(&self) -> Result<()> {
        if self
            .weights
            .iter()
            .chain([&self.remainder])
            .any(|&w| !(w >= 0.0))
        {
            return Err(Error::Numerical("negative or NaN stick weight".into()));
        }
        let t = self.total();
        if (t - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Numerical(format!("stick weights sum to {t}")));
        }
        Ok(())
    }

    /// Move component `k`'s weight into the remainder and drop it.
    pub fn absorb(&mut self, k: usize) {
        let w = self.weights.remove(k);
        self.remainder += w;
    }

    /// Carve a fraction of the remainder off as a new trailing component.
    pub fn split_remainder(&mut self, fraction: f64) {
        let w = self.remainder * fraction;
        self.weights.push(w);
        self.remainder -= w;
    }

    /// Full vector `(β_1, ..., β_K, β_new)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.push(self.remainder);
        v
    }
}

/// GEM stick-breaking truncated after `truncation` sticks.
pub fn stick_break<R: Rng + ?Sized>(
    concentration: f64,
    truncation: usize,
    rng: &mut R,
) -> Result<StickWeights> {
    if !(concentration > 0.0) || !concentration.is_finite() {
        return Err(Error::Parameter(format!(
            "concentration must be positive, got {concentration}"
        )));
    }
    if truncation == 0 {
        return Err(Error::Parameter("truncation must be at least 1".into()));
    }
    let mut rest = 1.0;
    let mut weights = Vec::with_capacity(truncation);
    for _ in 0..truncation {
        let frac = dist::beta_one(concentration, rng);
        weights.push(frac * rest);
        rest *= 1.0 - frac;
    }
    Ok(StickWeights {
        weights,
        remainder: rest,
    })
}

/// Per-group weights `π_u ~ Dir(α_u β_1 + n_u·1, ..., α_u β_K + n_u·K, α_u β_new)`.
pub fn sample_pi<R: Rng + ?Sized>(
    beta: &StickWeights,
    alpha_u: f64,
    n_uk: &[usize],
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(alpha_u > 0.0) {
        return Err(Error::Parameter(format!(
            "alpha must be positive, got {alpha_u}"
        )));
    }
    if n_uk.len() != beta.len() {
        return Err(Error::Parameter(format!(
            "{} counts for {} components",
            n_uk.len(),
            beta.len()
        )));
    }
    let mut params: Vec<f64> = beta
        .weights
        .iter()
        .zip(n_uk)
        .map(|(&b, &n)| alpha_u * b + n as f64)
        .collect();
    params.push(alpha_u * beta.remainder);
    dist::dirichlet(&params, rng)
}
