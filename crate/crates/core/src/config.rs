//! Run configuration: a flat `key = value` file, `#` starting a comment.
//!
//! A `preset` key, wherever it appears, is applied first and the remaining
//! keys override it. [`RunConfig::to_text`] writes every key but `out` in a
//! fixed order and is what the run manifest hashes.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::base_measure::{BaseMeasure, DEFAULT_JITTER};
use crate::error::{Error, Result};
use crate::model::{CovariateGrid, GammaPrior, HyperParams, InvGammaPrior};
use crate::run::{SamplerKind, Schedule};
use crate::sampler::{AtomUpdate, Init, KernelMh, SamplerOptions};

pub const SEED_ENV: &str = "NHDP_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Gp,
    Product,
    Constant,
    Markov,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub sampler: SamplerKind,
    pub data: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub kernel: KernelKind,
    pub kernel_mean: f64,
    pub kernel_sigma2: f64,
    pub kernel_omega: f64,
    /// Per-slot variances of the product kernel; all equal to
    /// `kernel_sigma2` when unset.
    pub kernel_variances: Option<Vec<f64>>,
    pub kernel_jitter: f64,
    pub kernel_resample: bool,
    pub kernel_step: f64,
    pub kernel_sigma2_prior: GammaPrior,
    pub kernel_omega_lo: f64,
    pub kernel_omega_hi: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub sigma2: f64,
    pub gamma_prior: GammaPrior,
    pub alpha_prior: GammaPrior,
    pub sigma2_prior: InvGammaPrior,
    pub resample_gamma: bool,
    pub resample_alpha: bool,
    pub resample_sigma2: bool,
    pub alpha_shared: bool,
    pub atom_update: AtomUpdate,
    pub init: Init,
    pub debug_checks: bool,
    pub sweeps: usize,
    /// Half of `sweeps` when unset.
    pub burnin: Option<usize>,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: None,
            sampler: SamplerKind::Conditional,
            data: None,
            grid: None,
            out: None,
            kernel: KernelKind::Gp,
            kernel_mean: 0.0,
            kernel_sigma2: 1.0,
            kernel_omega: 0.01,
            kernel_variances: None,
            kernel_jitter: DEFAULT_JITTER,
            kernel_resample: false,
            kernel_step: 0.1,
            kernel_sigma2_prior: GammaPrior {
                shape: 2.0,
                rate: 2.0,
            },
            kernel_omega_lo: 0.01,
            kernel_omega_hi: 0.1,
            gamma: 1.0,
            alpha: 1.0,
            sigma2: 0.25,
            gamma_prior: GammaPrior {
                shape: 5.0,
                rate: 0.1,
            },
            alpha_prior: GammaPrior {
                shape: 20.0,
                rate: 20.0,
            },
            sigma2_prior: InvGammaPrior {
                shape: 5.0,
                scale: 1.0,
            },
            resample_gamma: true,
            resample_alpha: true,
            resample_sigma2: true,
            alpha_shared: true,
            atom_update: AtomUpdate::Exact,
            init: Init::Single,
            debug_checks: false,
            sweeps: 5000,
            burnin: None,
            thin: 5,
            chains: 4,
            seed: 1,
        }
    }
}

pub const PRESETS: [&str; 3] = ["paperA", "paperB", "twogroup"];

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let mut c = Self {
            preset: Some(name.to_string()),
            ..Self::default()
        };
        match name {
            "paperA" => {}
            "paperB" => c.kernel_omega = 0.05,
            "twogroup" => {
                c.kernel_omega = 0.05;
                c.alpha = 1.0;
                c.resample_alpha = false;
                c.sigma2_prior = InvGammaPrior {
                    shape: 2.0,
                    scale: 1.0,
                };
            }
            _ => {
                return Err(Error::config(
                    "preset",
                    format!("unknown preset {name:?}; expected one of {PRESETS:?}"),
                ))
            }
        }
        Ok(c)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(line, format!("line {}: expected `key = value`", n + 1))
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut c = match pairs.iter().rev().find(|(k, _)| k == "preset") {
            Some((_, v)) => Self::preset(v)?,
            None => Self::default(),
        };
        for (k, v) in &pairs {
            if k != "preset" {
                c.set(k, v)?;
            }
        }
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Apply `NHDP_SEED` if it is set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::config(SEED_ENV, format!("not an unsigned integer: {v:?}")))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "preset" => {
                let keep = std::mem::take(self);
                *self = Self {
                    data: keep.data,
                    grid: keep.grid,
                    out: keep.out,
                    ..Self::preset(v)?
                };
            }
            "sampler" => {
                self.sampler = match v {
                    "conditional" => SamplerKind::Conditional,
                    "marginal" => SamplerKind::Marginal,
                    _ => return Err(bad(key, v, "conditional or marginal")),
                }
            }
            "data" => self.data = Some(PathBuf::from(v)),
            "grid" => self.grid = Some(PathBuf::from(v)),
            "out" => self.out = Some(PathBuf::from(v)),
            "kernel" => {
                self.kernel = match v {
                    "gp" => KernelKind::Gp,
                    "product" => KernelKind::Product,
                    "constant" => KernelKind::Constant,
                    "markov" => KernelKind::Markov,
                    _ => return Err(bad(key, v, "gp, product, constant or markov")),
                }
            }
            "kernel.mean" => self.kernel_mean = real(key, v)?,
            "kernel.sigma2" => self.kernel_sigma2 = positive(key, v)?,
            "kernel.omega" => self.kernel_omega = positive(key, v)?,
            "kernel.variances" => {
                self.kernel_variances = Some(
                    v.split(',')
                        .map(|x| positive(key, x))
                        .collect::<Result<Vec<f64>>>()?,
                )
            }
            "kernel.jitter" => self.kernel_jitter = nonneg(key, v)?,
            "kernel.resample" => self.kernel_resample = boolean(key, v)?,
            "kernel.step" => self.kernel_step = positive(key, v)?,
            "kernel.sigma2_prior.shape" => self.kernel_sigma2_prior.shape = positive(key, v)?,
            "kernel.sigma2_prior.rate" => self.kernel_sigma2_prior.rate = positive(key, v)?,
            "kernel.omega_lo" => self.kernel_omega_lo = positive(key, v)?,
            "kernel.omega_hi" => self.kernel_omega_hi = positive(key, v)?,
            "gamma" => self.gamma = positive(key, v)?,
            "alpha" => self.alpha = positive(key, v)?,
            "sigma2" => self.sigma2 = positive(key, v)?,
            "prior.gamma.shape" => self.gamma_prior.shape = positive(key, v)?,
            "prior.gamma.rate" => self.gamma_prior.rate = positive(key, v)?,
            "prior.alpha.shape" => self.alpha_prior.shape = positive(key, v)?,
            "prior.alpha.rate" => self.alpha_prior.rate = positive(key, v)?,
            "prior.sigma2.shape" => self.sigma2_prior.shape = positive(key, v)?,
            "prior.sigma2.scale" => self.sigma2_prior.scale = positive(key, v)?,
            "resample.gamma" => self.resample_gamma = boolean(key, v)?,
            "resample.alpha" => self.resample_alpha = boolean(key, v)?,
            "resample.sigma2" => self.resample_sigma2 = boolean(key, v)?,
            "alpha.shared" => self.alpha_shared = boolean(key, v)?,
            "atom_update" => {
                self.atom_update = match v {
                    "exact" => AtomUpdate::Exact,
                    "slot_gibbs" => AtomUpdate::SlotGibbs,
                    _ => return Err(bad(key, v, "exact or slot_gibbs")),
                }
            }
            "init" => {
                self.init = match v.split_once(':') {
                    None if v == "single" => Init::Single,
                    Some(("random", k)) => Init::Random(count(key, k)?),
                    _ => return Err(bad(key, v, "single or random:K")),
                }
            }
            "debug_checks" => self.debug_checks = boolean(key, v)?,
            "sweeps" => self.sweeps = count(key, v)?,
            "burnin" => self.burnin = Some(v.parse().map_err(|_| bad(key, v, "a count"))?),
            "thin" => self.thin = count(key, v)?,
            "chains" => self.chains = count(key, v)?,
            "seed" => self.seed = v.parse().map_err(|_| bad(key, v, "an unsigned integer"))?,
            _ => return Err(Error::config(key, "unknown configuration key")),
        }
        Ok(())
    }

    /// Every key except `out` in a fixed order; parsing the result
    /// reproduces `self` up to the output directory.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        if let Some(p) = &self.preset {
            put("preset", p.clone());
        }
        put("sampler", self.sampler.name().into());
        if let Some(p) = path(&self.data) {
            put("data", p);
        }
        if let Some(p) = path(&self.grid) {
            put("grid", p);
        }
        let kind = match self.kernel {
            KernelKind::Gp => "gp",
            KernelKind::Product => "product",
            KernelKind::Constant => "constant",
            KernelKind::Markov => "markov",
        };
        put("kernel", kind.into());
        put("kernel.mean", num(self.kernel_mean));
        put("kernel.sigma2", num(self.kernel_sigma2));
        put("kernel.omega", num(self.kernel_omega));
        if let Some(vs) = &self.kernel_variances {
            put(
                "kernel.variances",
                vs.iter().map(|&x| num(x)).collect::<Vec<_>>().join(","),
            );
        }
        put("kernel.jitter", num(self.kernel_jitter));
        put("kernel.resample", self.kernel_resample.to_string());
        put("kernel.step", num(self.kernel_step));
        put(
            "kernel.sigma2_prior.shape",
            num(self.kernel_sigma2_prior.shape),
        );
        put(
            "kernel.sigma2_prior.rate",
            num(self.kernel_sigma2_prior.rate),
        );
        put("kernel.omega_lo", num(self.kernel_omega_lo));
        put("kernel.omega_hi", num(self.kernel_omega_hi));
        put("gamma", num(self.gamma));
        put("alpha", num(self.alpha));
        put("sigma2", num(self.sigma2));
        put("prior.gamma.shape", num(self.gamma_prior.shape));
        put("prior.gamma.rate", num(self.gamma_prior.rate));
        put("prior.alpha.shape", num(self.alpha_prior.shape));
        put("prior.alpha.rate", num(self.alpha_prior.rate));
        put("prior.sigma2.shape", num(self.sigma2_prior.shape));
        put("prior.sigma2.scale", num(self.sigma2_prior.scale));
        put("resample.gamma", self.resample_gamma.to_string());
        put("resample.alpha", self.resample_alpha.to_string());
        put("resample.sigma2", self.resample_sigma2.to_string());
        put("alpha.shared", self.alpha_shared.to_string());
        let au = match self.atom_update {
            AtomUpdate::Exact => "exact",
            AtomUpdate::SlotGibbs => "slot_gibbs",
        };
        put("atom_update", au.into());
        put(
            "init",
            match self.init {
                Init::Single => "single".into(),
                Init::Random(k) => format!("random:{k}"),
            },
        );
        put("debug_checks", self.debug_checks.to_string());
        put("sweeps", self.sweeps.to_string());
        if let Some(b) = self.burnin {
            put("burnin", b.to_string());
        }
        put("thin", self.thin.to_string());
        put("chains", self.chains.to_string());
        put("seed", self.seed.to_string());
        s
    }

    pub fn schedule(&self) -> Result<Schedule> {
        let burnin = self.burnin.unwrap_or(self.sweeps / 2);
        let s = Schedule {
            sweeps: self.sweeps,
            burnin,
            thin: self.thin,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn hyper(&self, n_groups: usize) -> HyperParams {
        HyperParams {
            gamma: self.gamma,
            alpha: vec![self.alpha; n_groups],
            sigma2_eps: self.sigma2,
            gamma_prior: self.gamma_prior,
            alpha_prior: self.alpha_prior,
            sigma2_prior: self.sigma2_prior,
            resample_gamma: self.resample_gamma,
            resample_alpha: self.resample_alpha,
            resample_sigma2: self.resample_sigma2,
            shared_alpha: self.alpha_shared,
        }
    }

    pub fn base_measure(&self, grid: &CovariateGrid) -> Result<BaseMeasure> {
        let (m, s2, om) = (self.kernel_mean, self.kernel_sigma2, self.kernel_omega);
        let h = match self.kernel {
            KernelKind::Gp => BaseMeasure::gp(grid, m, s2, om),
            KernelKind::Markov => BaseMeasure::markov_chain(grid, m, s2, om),
            KernelKind::Constant => BaseMeasure::constant(grid, m, s2),
            KernelKind::Product => {
                let vs = self
                    .kernel_variances
                    .clone()
                    .unwrap_or_else(|| vec![s2; grid.len()]);
                if vs.len() != grid.len() {
                    return Err(Error::config(
                        "kernel.variances",
                        format!("{} values for a {}-slot grid", vs.len(), grid.len()),
                    ));
                }
                BaseMeasure::product(grid, m, vs)
            }
        }?;
        if self.kernel_jitter != DEFAULT_JITTER {
            return BaseMeasure::new(
                h.kernel().clone(),
                h.mean().to_vec(),
                grid,
                self.kernel_jitter,
            );
        }
        Ok(h)
    }

    pub fn sampler_options(&self) -> Result<SamplerOptions> {
        let kernel_mh = if self.kernel_resample {
            if self.sampler == SamplerKind::Marginal {
                return Err(Error::config(
                    "kernel.resample",
                    "kernel resampling needs the conditional sampler",
                ));
            }
            if !(self.kernel_omega_lo < self.kernel_omega_hi) {
                return Err(Error::config(
                    "kernel.omega_lo",
                    "must be below kernel.omega_hi",
                ));
            }
            Some(KernelMh {
                sigma2_prior: self.kernel_sigma2_prior,
                omega_lo: self.kernel_omega_lo,
                omega_hi: self.kernel_omega_hi,
                step: self.kernel_step,
            })
        } else {
            None
        };
        Ok(SamplerOptions {
            atom_update: self.atom_update,
            init: self.init,
            kernel_mh,
            debug_checks: self.debug_checks,
        })
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn bad(key: &str, v: &str, expected: &str) -> Error {
    Error::config(key, format!("expected {expected}, got {v:?}"))
}

fn real(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| bad(key, v, "a finite number"))
}

fn positive(key: &str, v: &str) -> Result<f64> {
    let x = real(key, v)?;
    if x <= 0.0 {
        return Err(bad(key, v, "a positive number"));
    }
    Ok(x)
}

fn nonneg(key: &str, v: &str) -> Result<f64> {
    let x = real(key, v)?;
    if x < 0.0 {
        return Err(bad(key, v, "a non-negative number"));
    }
    Ok(x)
}

fn count(key: &str, v: &str) -> Result<usize> {
    v.trim()
        .parse::<usize>()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| bad(key, v, "a positive integer"))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(bad(key, v, "true or false")),
    }
}
