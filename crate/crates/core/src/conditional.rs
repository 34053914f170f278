//! Direct-assignment Gibbs sampler over `(z, m, β, φ)` with explicit atoms.

use rand::Rng;

use crate::base_measure::BaseMeasure;
use crate::combinatorics::sample_table_count;
use crate::conjugate::{self, LatentPosterior, SuffStats};
use crate::dist::{self, LN_2PI};
use crate::error::{Error, Result};
use crate::hyper;
use crate::model::{
    counts_from_assignments, CountStats, GroupedDataset, HyperParams, StickWeights,
};
use crate::sampler::{update_concentrations, AtomUpdate, Init, KernelMh, Sampler, SamplerOptions};
use crate::trace::TraceRecord;

#[derive(Debug, Clone)]
pub struct ConditionalState {
    pub z: Vec<Vec<usize>>,
    /// `[u][k]`
    pub n_uk: Vec<Vec<usize>>,
    /// `[u][k]`
    pub m_uk: Vec<Vec<usize>>,
    pub q: Vec<usize>,
    pub beta: StickWeights,
    pub atoms: Vec<Vec<f64>>,
    pub stats: Vec<SuffStats>,
    pub hyper: HyperParams,
}

impl ConditionalState {
    pub fn n_components(&self) -> usize {
        self.atoms.len()
    }

    pub fn counts(&self) -> CountStats {
        let k = self.q.iter().filter(|&&q| q > 0).count();
        CountStats {
            n_u: self.z.iter().map(Vec::len).collect(),
            n_ut: Vec::new(),
            n_uk: self.n_uk.clone(),
            m_u: self.m_uk.iter().map(|r| r.iter().sum()).collect(),
            m_uk: self.m_uk.clone(),
            q_k: self.q.clone(),
            q_total: self.q.iter().sum(),
            k,
        }
    }

    pub fn recompute_counts(&self) -> Result<CountStats> {
        counts_from_assignments(&self.z, &self.m_uk, self.n_components())
    }

    /// Structural checks plus agreement of incremental and recomputed counts.
    pub fn validate(&self, data: &GroupedDataset) -> Result<()> {
        let kk = self.n_components();
        let fresh = self.recompute_counts()?;
        fresh.check()?;
        let inc = self.counts();
        if fresh != inc {
            return Err(Error::Corruption(
                "incremental counts differ from recomputed counts".into(),
            ));
        }
        if self.beta.len() != kk || self.stats.len() != kk || self.q.len() != kk {
            return Err(Error::Corruption(
                "component tables have inconsistent length".into(),
            ));
        }
        self.beta.check()?;
        for k in 0..kk {
            let has_data = (0..self.z.len()).any(|u| self.n_uk[u][k] > 0);
            if has_data && self.q[k] == 0 {
                return Err(Error::Corruption(format!(
                    "component {k} holds data but q_k = 0"
                )));
            }
            for u in 0..self.z.len() {
                if self.stats[k].count(u) != self.n_uk[u][k] {
                    return Err(Error::Corruption(format!(
                        "sufficient statistics of component {k} disagree at group {u}"
                    )));
                }
                if (self.n_uk[u][k] == 0) != (self.m_uk[u][k] == 0)
                    || self.m_uk[u][k] > self.n_uk[u][k]
                {
                    return Err(Error::Corruption(format!(
                        "m_uk out of range at group {u}, component {k}"
                    )));
                }
            }
        }
        if data.group_sizes() != inc.n_u {
            return Err(Error::Corruption(
                "state does not match dataset shape".into(),
            ));
        }
        Ok(())
    }

    fn push_component(&mut self, atom: Vec<f64>, m: usize) {
        self.atoms.push(atom);
        self.stats.push(SuffStats::new(m));
        self.q.push(0);
        for u in 0..self.z.len() {
            self.n_uk[u].push(0);
            self.m_uk[u].push(0);
        }
    }

    fn remove_component(&mut self, k: usize) {
        self.atoms.remove(k);
        self.stats.remove(k);
        self.q.remove(k);
        self.beta.absorb(k);
        for u in 0..self.z.len() {
            self.n_uk[u].remove(k);
            self.m_uk[u].remove(k);
            for zi in self.z[u].iter_mut() {
                if *zi > k {
                    *zi -= 1;
                }
            }
        }
    }

    fn assign(&mut self, u: usize, i: usize, k: usize, y: f64) {
        self.z[u][i] = k;
        self.n_uk[u][k] += 1;
        self.stats[k].add(u, y);
        if self.n_uk[u][k] == 1 {
            self.m_uk[u][k] = 1;
            self.q[k] += 1;
        }
    }

    fn unassign(&mut self, u: usize, i: usize, y: f64) -> usize {
        let k = self.z[u][i];
        self.n_uk[u][k] -= 1;
        self.stats[k].remove(u, y);
        if self.n_uk[u][k] == 0 {
            self.q[k] -= self.m_uk[u][k];
            self.m_uk[u][k] = 0;
        } else if self.m_uk[u][k] > self.n_uk[u][k] {
            self.m_uk[u][k] -= 1;
            self.q[k] -= 1;
        }
        k
    }
}

/// Conditional sampler bound to a dataset and base measure.
#[derive(Debug, Clone)]
pub struct ConditionalSampler<'a> {
    pub data: &'a GroupedDataset,
    pub h: BaseMeasure,
    pub state: ConditionalState,
    pub opts: SamplerOptions,
}

impl<'a> ConditionalSampler<'a> {
    pub fn new<R: Rng + ?Sized>(
        data: &'a GroupedDataset,
        h: BaseMeasure,
        hyper: HyperParams,
        opts: SamplerOptions,
        rng: &mut R,
    ) -> Result<Self> {
        let m = h.len();
        if data.n_groups() != m {
            return Err(Error::Data(format!(
                "dataset has {} groups but the grid has {m} slots",
                data.n_groups()
            )));
        }
        hyper.validate(m)?;
        if opts.atom_update == AtomUpdate::SlotGibbs && (h.is_constant() || m < 2) {
            return Err(Error::Unsupported(
                "slot-wise atom updates need a full-rank base measure on at least two slots".into(),
            ));
        }
        if opts.kernel_mh.is_some() && h.with_kernel_params(1.0, 1.0).is_err() {
            return Err(Error::Unsupported(format!(
                "kernel resampling is not available for the {} base measure",
                h.kernel().name()
            )));
        }
        let k0 = match opts.init {
            _ if data.total() == 0 => 0,
            Init::Single => 1,
            Init::Random(k) => k.max(1),
        };
        let z: Vec<Vec<usize>> = data
            .groups()
            .iter()
            .map(|g| {
                g.iter()
                    .map(|_| if k0 > 1 { rng.random_range(0..k0) } else { 0 })
                    .collect()
            })
            .collect();
        let mut state = ConditionalState {
            z: z.iter().map(|g| vec![0; g.len()]).collect(),
            n_uk: vec![Vec::new(); m],
            m_uk: vec![Vec::new(); m],
            q: Vec::new(),
            beta: StickWeights::empty(),
            atoms: Vec::new(),
            stats: Vec::new(),
            hyper,
        };
        for _ in 0..k0 {
            state.push_component(vec![0.0; m], m);
            state.beta.weights.push(0.0);
        }
        for u in 0..m {
            for (i, &k) in z[u].iter().enumerate() {
                state.assign(u, i, k, data.group(u)[i]);
            }
        }
        let mut s = Self {
            data,
            h,
            state,
            opts,
        };
        s.sample_m(rng)?;
        s.sample_beta(rng)?;
        s.sample_atoms_exact(rng)?;
        s.check("init")?;
        Ok(s)
    }

    fn check(&self, step: &str) -> Result<()> {
        if self.opts.debug_checks {
            self.state
                .validate(self.data)
                .map_err(|e| Error::Corruption(format!("after {step}: {e}")))?;
        }
        Ok(())
    }

    /// Log weights for one observation: existing components then a new one.
    pub fn z_log_weights(&self, u: usize, y: f64) -> Result<Vec<f64>> {
        let st = &self.state;
        let s2 = st.hyper.sigma2_eps;
        let alpha = st.hyper.alpha[u];
        let c = -0.5 * (LN_2PI + s2.ln());
        let mut w: Vec<f64> = (0..st.n_components())
            .map(|k| {
                let prior = st.n_uk[u][k] as f64 + alpha * st.beta.weights[k];
                let d = y - st.atoms[k][u];
                prior.ln() + c - 0.5 * d * d / s2
            })
            .collect();
        w.push((alpha * st.beta.remainder).ln() + conjugate::ln_predictive_new(&self.h, u, y, s2)?);
        Ok(w)
    }

    pub fn sample_z<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let m = self.h.len();
        for u in 0..m {
            for i in 0..self.data.n_u(u) {
                let y = self.data.group(u)[i];
                let k_old = self.state.unassign(u, i, y);
                if self.state.q[k_old] == 0 {
                    self.state.remove_component(k_old);
                }
                let w = self.z_log_weights(u, y)?;
                let mut k = dist::sample_log_categorical(&w, rng)?;
                if k == self.state.n_components() {
                    let b = dist::beta_one(self.state.hyper.gamma, rng);
                    let post = LatentPosterior::new(
                        &self.h,
                        &SuffStats::from_obs(m, [(u, y)]),
                        self.state.hyper.sigma2_eps,
                    )?;
                    let atom = post.sample(&self.h, rng);
                    self.state.push_component(atom, m);
                    self.state.beta.split_remainder(b);
                    k = self.state.n_components() - 1;
                }
                self.state.assign(u, i, k, y);
            }
        }
        self.check("z update")
    }

    /// Redraw table counts, then drop components with no tables.
    pub fn sample_m<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let st = &mut self.state;
        let kk = st.n_components();
        for u in 0..st.z.len() {
            let alpha = st.hyper.alpha[u];
            for k in 0..kk {
                let n = st.n_uk[u][k];
                let a = (alpha * st.beta.weights[k]).max(f64::MIN_POSITIVE);
                st.m_uk[u][k] = sample_table_count(n, a, rng)?;
            }
        }
        for k in 0..kk {
            st.q[k] = st.m_uk.iter().map(|r| r[k]).sum();
        }
        for k in (0..kk).rev() {
            if st.q[k] == 0 {
                st.remove_component(k);
            }
        }
        self.check("table-count update")
    }

    pub fn sample_beta<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let st = &mut self.state;
        let mut params: Vec<f64> = st.q.iter().map(|&q| q as f64).collect();
        params.push(st.hyper.gamma);
        st.beta = StickWeights::from_vec(dist::dirichlet(&params, rng)?)?;
        self.check("weight update")
    }

    fn sample_atoms_exact<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let s2 = self.state.hyper.sigma2_eps;
        for k in 0..self.state.n_components() {
            let post = LatentPosterior::new(&self.h, &self.state.stats[k], s2)?;
            self.state.atoms[k] = post.sample(&self.h, rng);
        }
        Ok(())
    }

    pub fn sample_atoms<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        match self.opts.atom_update {
            AtomUpdate::Exact => self.sample_atoms_exact(rng)?,
            AtomUpdate::SlotGibbs => {
                let s2 = self.state.hyper.sigma2_eps;
                let st = &mut self.state;
                for k in 0..st.atoms.len() {
                    conjugate::gibbs_slots(&self.h, &mut st.atoms[k], &st.stats[k], s2, rng)?;
                }
            }
        }
        self.check("atom update")
    }

    pub fn residual_ss(&self) -> f64 {
        let mut ss = 0.0;
        for (u, g) in self.data.groups().iter().enumerate() {
            for (i, &y) in g.iter().enumerate() {
                let d = y - self.state.atoms[self.state.z[u][i]][u];
                ss += d * d;
            }
        }
        ss
    }

    pub fn sample_sigma_eps<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let hp = &self.state.hyper;
        if !hp.resample_sigma2 {
            return Ok(());
        }
        let s2 =
            hyper::sample_sigma2(&hp.sigma2_prior, self.data.total(), self.residual_ss(), rng)?;
        self.state.hyper.sigma2_eps = s2;
        Ok(())
    }

    fn kernel_log_target(&self, h: &BaseMeasure, mh: &KernelMh, sigma2: f64) -> Result<f64> {
        let p = &mh.sigma2_prior;
        let mut lp = (p.shape - 1.0) * sigma2.ln() - p.rate * sigma2;
        for a in &self.state.atoms {
            lp += h.log_density(a)?;
        }
        Ok(lp)
    }

    /// Metropolis–Hastings step on the kernel parameters given the atoms.
    pub fn sample_kernel<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let Some(mh) = self.opts.kernel_mh else {
            return Ok(());
        };
        let (s2, om) = match *self.h.kernel() {
            crate::base_measure::Kernel::Gp { sigma2, omega }
            | crate::base_measure::Kernel::MarkovChain { sigma2, omega } => (sigma2, omega),
            _ => return Ok(()),
        };
        let s2_new = s2 * (mh.step * dist::std_normal(rng)).exp();
        let om_new = om * (mh.step * dist::std_normal(rng)).exp();
        if !(mh.omega_lo..=mh.omega_hi).contains(&om_new) {
            return Ok(());
        }
        let proposal = self.h.with_kernel_params(s2_new, om_new)?;
        // log-scale random walk: Jacobian terms ln(s2' ω') - ln(s2 ω)
        let log_ratio = self.kernel_log_target(&proposal, &mh, s2_new)?
            - self.kernel_log_target(&self.h, &mh, s2)?
            + (s2_new * om_new).ln()
            - (s2 * om).ln();
        if dist::open_uniform(rng).ln() < log_ratio {
            self.h = proposal;
        }
        Ok(())
    }
}

impl Sampler for ConditionalSampler<'_> {
    fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.sample_z(rng)?;
        self.sample_m(rng)?;
        self.sample_beta(rng)?;
        self.sample_atoms(rng)?;
        let counts = self.state.counts();
        update_concentrations(&mut self.state.hyper, &counts, rng)?;
        self.sample_sigma_eps(rng)?;
        self.sample_kernel(rng)?;
        self.check("hyperparameter update")
    }

    fn record<R: Rng + ?Sized>(&self, sweep: usize, _aux: &mut R) -> Result<TraceRecord> {
        let st = &self.state;
        Ok(TraceRecord {
            sweep,
            k: st.n_components(),
            gamma: st.hyper.gamma,
            alpha: st.hyper.alpha.clone(),
            sigma2: st.hyper.sigma2_eps,
            z: st.z.clone(),
            atoms: st.atoms.clone(),
        })
    }

    fn counts(&self) -> CountStats {
        self.state.counts()
    }

    fn recompute_counts(&self) -> Result<CountStats> {
        self.state.recompute_counts()
    }

    fn hyper(&self) -> &HyperParams {
        &self.state.hyper
    }
}
