//! Pieces shared by the two Gibbs samplers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hyper;
use crate::model::{CountStats, GammaPrior, HyperParams};
use crate::trace::TraceRecord;

/// How atoms are refreshed under a chain-structured base measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum AtomUpdate {
    /// Exact joint draw from the Gaussian posterior.
    #[default]
    Exact,
    /// One systematic scan of single-slot conditional updates.
    SlotGibbs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Init {
    /// Every observation in one component.
    #[default]
    Single,
    /// Observations assigned uniformly at random among this many components.
    Random(usize),
}

/// Random-walk Metropolis–Hastings on `(ln σ², ln ω)` of the base measure,
/// with `σ² ~ Gamma(shape, rate)` and `ω ~ Uniform(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelMh {
    pub sigma2_prior: GammaPrior,
    pub omega_lo: f64,
    pub omega_hi: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SamplerOptions {
    pub atom_update: AtomUpdate,
    pub init: Init,
    pub kernel_mh: Option<KernelMh>,
    /// Recompute counts from scratch after every sub-step and compare.
    pub debug_checks: bool,
}

/// Common interface of the two samplers.
pub trait Sampler {
    fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()>;
    /// Snapshot of the chain. Samplers that integrate atoms out draw them
    /// from their posteriors with `aux`, leaving the chain's own stream untouched.
    fn record<R: Rng + ?Sized>(&self, sweep: usize, aux: &mut R) -> Result<TraceRecord>;
    fn counts(&self) -> CountStats;
    fn recompute_counts(&self) -> Result<CountStats>;
    fn hyper(&self) -> &HyperParams;
}

/// γ and α updates given the current occupancy.
pub(crate) fn update_concentrations<R: Rng + ?Sized>(
    hp: &mut HyperParams,
    counts: &CountStats,
    rng: &mut R,
) -> Result<()> {
    if hp.resample_gamma {
        hp.gamma = hyper::escobar_west(hp.gamma, counts.k, counts.q_total, &hp.gamma_prior, rng)?;
    }
    if hp.resample_alpha {
        if hp.shared_alpha {
            let m_total = counts.m_u.iter().sum();
            let a = hyper::shared_concentration(
                hp.alpha[0],
                &counts.n_u,
                m_total,
                &hp.alpha_prior,
                rng,
            )?;
            hp.alpha.iter_mut().for_each(|x| *x = a);
        } else {
            for u in 0..hp.alpha.len() {
                hp.alpha[u] = hyper::escobar_west(
                    hp.alpha[u],
                    counts.m_u[u],
                    counts.n_u[u],
                    &hp.alpha_prior,
                    rng,
                )?;
            }
        }
    }
    Ok(())
}
