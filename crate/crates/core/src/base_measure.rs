//! Gaussian base measures over global atoms.
//!
//! Every variant is represented as `φ = μ + F z` with `z ~ N(0, I_d)`. For the
//! full-rank variants `F` is a Cholesky factor of the covariance; for the
//! constant variant `F` is the single column `σ·1`, so all slots of an atom
//! share one latent coordinate.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{self, LN_2PI};
use crate::error::{Error, Result};
use crate::model::CovariateGrid;

/// Default relative diagonal jitter, scaled by the kernel variance.
pub const DEFAULT_JITTER: f64 = 1e-10;
/// Number of jitter doublings attempted before giving up.
pub const JITTER_DOUBLINGS: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    /// Exponential covariance `σ² exp(-ω‖u - v‖)`.
    Gp { sigma2: f64, omega: f64 },
    /// Independent slots with per-slot variances.
    Product { variances: Vec<f64> },
    /// Atoms constant across slots: a single draw `N(μ, σ²)` replicated.
    Constant { sigma2: f64 },
    /// Stationary Gaussian chain in grid order with link correlation
    /// `exp(-ω Δ)` between consecutive slots.
    MarkovChain { sigma2: f64, omega: f64 },
}

impl Kernel {
    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Gp { .. } => "gp",
            Kernel::Product { .. } => "product",
            Kernel::Constant { .. } => "constant",
            Kernel::MarkovChain { .. } => "markov-chain",
        }
    }
}

/// Exponential covariance matrix over the grid.
pub fn cov_matrix(grid: &CovariateGrid, sigma2: f64, omega: f64) -> Result<DMatrix<f64>> {
    check_positive("sigma2", sigma2)?;
    check_positive("omega", omega)?;
    let m = grid.len();
    Ok(DMatrix::from_fn(m, m, |u, v| {
        if u == v {
            sigma2
        } else {
            sigma2 * (-omega * grid.distance(u, v)).exp()
        }
    }))
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "{name} must be positive, got {x}"
        )))
    }
}

/// Cholesky factor of `cov`, adding `jitter·2^i` to the diagonal on failure.
/// Returns the factor and the jitter that was needed.
pub fn cholesky_with_jitter(cov: &DMatrix<f64>, jitter: f64) -> Result<(DMatrix<f64>, f64)> {
    if let Some(ch) = cov.clone().cholesky() {
        return Ok((ch.l(), 0.0));
    }
    let mut j = jitter;
    for _ in 0..=JITTER_DOUBLINGS {
        let mut c = cov.clone();
        for i in 0..c.nrows() {
            c[(i, i)] += j;
        }
        if let Some(ch) = c.cholesky() {
            return Ok((ch.l(), j));
        }
        j *= 2.0;
    }
    Err(Error::Numerical(format!(
        "covariance not positive definite after jitter {}",
        j / 2.0
    )))
}

#[derive(Debug, Clone)]
pub struct BaseMeasure {
    kernel: Kernel,
    grid: CovariateGrid,
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    factor: DMatrix<f64>,
    precision: Option<DMatrix<f64>>,
    links: Vec<f64>,
    jitter: f64,
    jitter_used: f64,
}

impl BaseMeasure {
    pub fn new(kernel: Kernel, mean: Vec<f64>, grid: &CovariateGrid, jitter: f64) -> Result<Self> {
        let m = grid.len();
        if mean.len() != m {
            return Err(Error::Parameter(format!(
                "mean has {} entries for a grid of {m}",
                mean.len()
            )));
        }
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parameter("mean must be finite".into()));
        }
        let mut links = Vec::new();
        let mut jitter_used = 0.0;
        let (cov, factor) = match &kernel {
            Kernel::Gp { sigma2, omega } => {
                let cov = cov_matrix(grid, *sigma2, *omega)?;
                let (l, j) = cholesky_with_jitter(&cov, jitter * sigma2)?;
                jitter_used = j;
                (cov, l)
            }
            Kernel::Product { variances } => {
                if variances.len() != m {
                    return Err(Error::Parameter(format!(
                        "{} variances for a grid of {m}",
                        variances.len()
                    )));
                }
                for &v in variances {
                    check_positive("product variance", v)?;
                }
                let cov = DMatrix::from_diagonal(&DVector::from_vec(variances.clone()));
                let l = DMatrix::from_diagonal(&DVector::from_iterator(
                    m,
                    variances.iter().map(|v| v.sqrt()),
                ));
                (cov, l)
            }
            Kernel::Constant { sigma2 } => {
                check_positive("sigma2", *sigma2)?;
                if mean.windows(2).any(|w| w[0] != w[1]) {
                    return Err(Error::Parameter(
                        "constant base measure needs a constant mean".into(),
                    ));
                }
                let cov = DMatrix::from_element(m, m, *sigma2);
                let f = DMatrix::from_element(m, 1, sigma2.sqrt());
                (cov, f)
            }
            Kernel::MarkovChain { sigma2, omega } => {
                check_positive("sigma2", *sigma2)?;
                check_positive("omega", *omega)?;
                links = (1..m)
                    .map(|j| (-omega * grid.distance(j - 1, j)).exp())
                    .collect();
                let sd = sigma2.sqrt();
                // x_1 = σ e_1, x_{j+1} = a_j x_j + σ sqrt(1 - a_j²) e_{j+1}
                let mut l = DMatrix::zeros(m, m);
                for i in 0..m {
                    let lead = if i == 0 {
                        sd
                    } else {
                        sd * (1.0 - links[i - 1] * links[i - 1]).sqrt()
                    };
                    let mut coef = lead;
                    l[(i, i)] = coef;
                    for j in i + 1..m {
                        coef *= links[j - 1];
                        l[(j, i)] = coef;
                    }
                }
                let cov = &l * l.transpose();
                (cov, l)
            }
        };
        let precision = match &kernel {
            Kernel::Constant { .. } => None,
            _ => {
                let l_inv = factor
                    .clone()
                    .solve_lower_triangular(&DMatrix::identity(m, m))
                    .ok_or_else(|| Error::Numerical("singular covariance factor".into()))?;
                Some(l_inv.transpose() * l_inv)
            }
        };
        Ok(Self {
            kernel,
            grid: grid.clone(),
            mean,
            cov,
            factor,
            precision,
            links,
            jitter,
            jitter_used,
        })
    }

    pub fn gp(grid: &CovariateGrid, mean: f64, sigma2: f64, omega: f64) -> Result<Self> {
        Self::new(
            Kernel::Gp { sigma2, omega },
            vec![mean; grid.len()],
            grid,
            DEFAULT_JITTER,
        )
    }

    pub fn product(grid: &CovariateGrid, mean: f64, variances: Vec<f64>) -> Result<Self> {
        Self::new(
            Kernel::Product { variances },
            vec![mean; grid.len()],
            grid,
            DEFAULT_JITTER,
        )
    }

    pub fn constant(grid: &CovariateGrid, mean: f64, sigma2: f64) -> Result<Self> {
        Self::new(
            Kernel::Constant { sigma2 },
            vec![mean; grid.len()],
            grid,
            DEFAULT_JITTER,
        )
    }

    pub fn markov_chain(grid: &CovariateGrid, mean: f64, sigma2: f64, omega: f64) -> Result<Self> {
        Self::new(
            Kernel::MarkovChain { sigma2, omega },
            vec![mean; grid.len()],
            grid,
            DEFAULT_JITTER,
        )
    }

    /// Same variant and mean with new kernel parameters (gp and markov-chain only).
    pub fn with_kernel_params(&self, sigma2: f64, omega: f64) -> Result<Self> {
        let kernel = match self.kernel {
            Kernel::Gp { .. } => Kernel::Gp { sigma2, omega },
            Kernel::MarkovChain { .. } => Kernel::MarkovChain { sigma2, omega },
            _ => {
                return Err(Error::Unsupported(format!(
                    "{} base measure has no (sigma2, omega) kernel",
                    self.kernel.name()
                )))
            }
        };
        Self::new(kernel, self.mean.clone(), &self.grid, self.jitter)
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn grid(&self) -> &CovariateGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// `F` with `φ = μ + F z`, shape `M × d`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn latent_dim(&self) -> usize {
        self.factor.ncols()
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kernel, Kernel::Constant { .. })
    }

    pub fn sample_atom<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.latent_dim();
        let z = DVector::from_iterator(d, (0..d).map(|_| dist::std_normal(rng)));
        let fz = &self.factor * z;
        self.mean
            .iter()
            .zip(fz.iter())
            .map(|(m, x)| m + x)
            .collect()
    }

    pub fn log_density(&self, phi: &[f64]) -> Result<f64> {
        let m = self.len();
        if phi.len() != m {
            return Err(Error::Parameter(format!(
                "atom has {} entries for a grid of {m}",
                phi.len()
            )));
        }
        Ok(match &self.kernel {
            Kernel::Gp { .. } => {
                let x = DVector::from_iterator(m, phi.iter().zip(&self.mean).map(|(p, mu)| p - mu));
                let w = self
                    .factor
                    .solve_lower_triangular(&x)
                    .ok_or_else(|| Error::Numerical("singular covariance factor".into()))?;
                let log_det: f64 = (0..m).map(|i| self.factor[(i, i)].ln()).sum();
                -0.5 * m as f64 * LN_2PI - log_det - 0.5 * w.norm_squared()
            }
            Kernel::Product { variances } => phi
                .iter()
                .zip(&self.mean)
                .zip(variances)
                .map(|((p, mu), v)| dist::ln_normal_pdf(*p, *mu, *v))
                .sum(),
            Kernel::Constant { sigma2 } => {
                if phi.windows(2).all(|w| w[0] == w[1]) {
                    dist::ln_normal_pdf(phi[0], self.mean[0], *sigma2)
                } else {
                    f64::NEG_INFINITY
                }
            }
            Kernel::MarkovChain { sigma2, .. } => {
                let x: Vec<f64> = phi.iter().zip(&self.mean).map(|(p, mu)| p - mu).collect();
                let mut lp = dist::ln_normal_pdf(x[0], 0.0, *sigma2);
                for j in 1..m {
                    let a = self.links[j - 1];
                    lp += dist::ln_normal_pdf(x[j], a * x[j - 1], sigma2 * (1.0 - a * a));
                }
                lp
            }
        })
    }

    /// Marginal `(mean, variance)` of slot `u`.
    pub fn marginal_slot(&self, u: usize) -> (f64, f64) {
        (self.mean[u], self.cov[(u, u)])
    }

    /// Gaussian conditional `(mean, variance)` of slot `u` given the other
    /// entries of `phi` (entry `u` is ignored).
    pub fn conditional_slot(&self, phi: &[f64], u: usize) -> Result<(f64, f64)> {
        let m = self.len();
        if m < 2 {
            return Err(Error::Parameter(
                "conditioning needs at least two slots".into(),
            ));
        }
        if phi.len() != m || u >= m {
            return Err(Error::Parameter(format!(
                "slot {u} / atom length {} inconsistent with grid of {m}",
                phi.len()
            )));
        }
        match &self.kernel {
            Kernel::Product { variances } => Ok((self.mean[u], variances[u])),
            Kernel::Constant { .. } => {
                let others: Vec<f64> = (0..m).filter(|&v| v != u).map(|v| phi[v]).collect();
                if others.windows(2).all(|w| w[0] == w[1]) {
                    Ok((others[0], 0.0))
                } else {
                    Err(Error::Numerical(
                        "constant base measure conditioned on unequal slots".into(),
                    ))
                }
            }
            Kernel::Gp { .. } => {
                let p = self.precision.as_ref().expect("full-rank precision");
                let puu = p[(u, u)];
                if !(puu > 0.0) {
                    return Err(Error::Numerical("singular conditioning".into()));
                }
                let s: f64 = (0..m)
                    .filter(|&v| v != u)
                    .map(|v| p[(u, v)] * (phi[v] - self.mean[v]))
                    .sum();
                Ok((self.mean[u] - s / puu, 1.0 / puu))
            }
            Kernel::MarkovChain { sigma2, .. } => {
                // p(x_u | x_{u-1}, x_{u+1}) ∝ p(x_u | x_{u-1}) p(x_{u+1} | x_u)
                let x = |v: usize| phi[v] - self.mean[v];
                let (mut prec, mut shift) = if u == 0 {
                    (1.0 / sigma2, 0.0)
                } else {
                    let a = self.links[u - 1];
                    let v = sigma2 * (1.0 - a * a);
                    (1.0 / v, a * x(u - 1) / v)
                };
                if u + 1 < m {
                    let b = self.links[u];
                    let v = sigma2 * (1.0 - b * b);
                    prec += b * b / v;
                    shift += b * x(u + 1) / v;
                }
                Ok((self.mean[u] + shift / prec, 1.0 / prec))
            }
        }
    }
}
