//! Running one or several chains and collecting their thinned records.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::base_measure::BaseMeasure;
use crate::conditional::ConditionalSampler;
use crate::error::{Error, Result};
use crate::marginal::MarginalSampler;
use crate::model::{GroupedDataset, HyperParams};
use crate::sampler::{Sampler, SamplerOptions};
use crate::trace::TraceRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    #[default]
    Conditional,
    Marginal,
}

impl SamplerKind {
    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::Conditional => "conditional",
            SamplerKind::Marginal => "marginal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub sweeps: usize,
    pub burnin: usize,
    pub thin: usize,
}

impl Schedule {
    pub fn keeps(&self, sweep: usize) -> bool {
        sweep >= self.burnin && (sweep - self.burnin) % self.thin == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::config("thin", "must be at least 1"));
        }
        if self.burnin >= self.sweeps {
            return Err(Error::config("burnin", "must be smaller than sweeps"));
        }
        Ok(())
    }
}

/// The two random streams of chain `chain`: the sampler's own and the one
/// used to draw recorded atoms.
pub fn chain_rngs(seed: u64, chain: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut main = ChaCha8Rng::seed_from_u64(seed);
    main.set_stream(2 * chain as u64);
    let mut aux = ChaCha8Rng::seed_from_u64(seed);
    aux.set_stream(2 * chain as u64 + 1);
    (main, aux)
}

fn drive<S: Sampler>(
    mut s: S,
    schedule: &Schedule,
    main: &mut ChaCha8Rng,
    aux: &mut ChaCha8Rng,
) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for sweep in 0..schedule.sweeps {
        s.sweep(main)?;
        if schedule.keeps(sweep) {
            out.push(s.record(sweep, aux)?);
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn run_chain(
    data: &GroupedDataset,
    h: &BaseMeasure,
    hyper: &HyperParams,
    opts: SamplerOptions,
    kind: SamplerKind,
    schedule: &Schedule,
    seed: u64,
    chain: usize,
) -> Result<Vec<TraceRecord>> {
    schedule.validate()?;
    let (mut main, mut aux) = chain_rngs(seed, chain);
    match kind {
        SamplerKind::Conditional => {
            let s = ConditionalSampler::new(data, h.clone(), hyper.clone(), opts, &mut main)?;
            drive(s, schedule, &mut main, &mut aux)
        }
        SamplerKind::Marginal => {
            let s = MarginalSampler::new(data, h.clone(), hyper.clone(), opts, &mut main)?;
            drive(s, schedule, &mut main, &mut aux)
        }
    }
}

/// Independent chains `0..chains`, run concurrently.
#[allow(clippy::too_many_arguments)]
pub fn run_chains(
    data: &GroupedDataset,
    h: &BaseMeasure,
    hyper: &HyperParams,
    opts: SamplerOptions,
    kind: SamplerKind,
    schedule: &Schedule,
    seed: u64,
    chains: usize,
) -> Result<Vec<Vec<TraceRecord>>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains)
            .map(|c| scope.spawn(move || run_chain(data, h, hyper, opts, kind, schedule, seed, c)))
            .collect();
        handles
            .into_iter()
            .map(|j| {
                j.join()
                    .unwrap_or_else(|_| Err(Error::Numerical("chain thread panicked".into())))
            })
            .collect()
    })
}
