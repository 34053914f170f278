//! Collapsed sampler over instance indices `t` and component indices `k`,
//! with both random measures and the atoms integrated out.
//!
//! Instances are local to the group that created them. Each component keeps
//! its Gaussian atom posterior in full coordinates and updates it by rank-one
//! steps as observations move; posteriors are rebuilt from the sufficient
//! statistics at the start of every sweep.

use nalgebra::DMatrix;
use rand::Rng;

use crate::base_measure::BaseMeasure;
use crate::conjugate::{self, LatentPosterior, SlotBlock, SuffStats};
use crate::dist::{self, LN_2PI};
use crate::error::{Error, Result};
use crate::hyper;
use crate::model::{counts_from_indices, CountStats, GroupedDataset, HyperParams};
use crate::sampler::{update_concentrations, Init, Sampler, SamplerOptions};
use crate::trace::TraceRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Table {
    pub k: usize,
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct Component {
    pub stats: SuffStats,
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
    /// Tables pointing here, over all groups.
    pub q: usize,
}

impl Component {
    fn from_prior(h: &BaseMeasure) -> Self {
        Self {
            stats: SuffStats::new(h.len()),
            mean: h.mean().to_vec(),
            cov: h.cov().clone(),
            q: 0,
        }
    }

    fn refresh(&mut self, h: &BaseMeasure, sigma2: f64) -> Result<()> {
        let p = LatentPosterior::new(h, &self.stats, sigma2)?.to_atom_posterior(h);
        self.mean = p.mean.as_slice().to_vec();
        self.cov = p.cov;
        Ok(())
    }

    /// Condition on a pseudo-observation `y` at slot `u` with noise variance
    /// `r`; a negative `r` removes a previously absorbed observation.
    fn kalman(&mut self, u: usize, y: f64, r: f64) {
        let s = self.cov[(u, u)] + r;
        let col: Vec<f64> = self.cov.column(u).iter().copied().collect();
        let innov = (y - self.mean[u]) / s;
        let m = col.len();
        for i in 0..m {
            self.mean[i] += col[i] * innov;
        }
        for j in 0..m {
            let cj = col[j] / s;
            for i in 0..m {
                self.cov[(i, j)] -= col[i] * cj;
            }
        }
    }

    fn add_block(&mut self, u: usize, n: usize, sum: f64, sigma2: f64) {
        self.stats.add_many(u, n, sum);
        self.kalman(u, sum / n as f64, sigma2 / n as f64);
    }

    fn remove_block(&mut self, u: usize, n: usize, sum: f64, sigma2: f64, h: &BaseMeasure) {
        self.stats.remove_many(u, n, sum);
        if self.stats.is_empty() {
            self.mean = h.mean().to_vec();
            self.cov = h.cov().clone();
        } else {
            self.kalman(u, sum / n as f64, -sigma2 / n as f64);
        }
    }

    fn ln_predictive(&self, y: f64, u: usize, sigma2: f64) -> f64 {
        let v = self.cov[(u, u)] + sigma2;
        let d = y - self.mean[u];
        -0.5 * (LN_2PI + v.ln()) - 0.5 * d * d / v
    }
}

#[derive(Debug, Clone)]
pub struct MarginalState {
    /// Group-local table index per observation, `[u][i]`.
    pub t: Vec<Vec<usize>>,
    /// Tables of each group, in creation order.
    pub tables: Vec<Vec<Table>>,
    pub comps: Vec<Component>,
    /// `[u][k]`
    pub m_uk: Vec<Vec<usize>>,
    pub hyper: HyperParams,
}

impl MarginalState {
    pub fn n_components(&self) -> usize {
        self.comps.len()
    }

    /// Global instance numbering: group 0's tables first, then group 1's, ...
    fn global_indices(&self) -> (Vec<Vec<usize>>, Vec<usize>) {
        let mut offset = 0;
        let mut t = Vec::with_capacity(self.t.len());
        let mut k_of_t = Vec::new();
        for (u, tu) in self.t.iter().enumerate() {
            t.push(tu.iter().map(|&j| j + offset).collect());
            k_of_t.extend(self.tables[u].iter().map(|tb| tb.k));
            offset += self.tables[u].len();
        }
        (t, k_of_t)
    }

    pub fn counts(&self) -> CountStats {
        let groups = self.t.len();
        let total_tables: usize = self.tables.iter().map(Vec::len).sum();
        let mut n_ut = vec![vec![0; total_tables]; groups];
        let mut offset = 0;
        for u in 0..groups {
            for (j, tb) in self.tables[u].iter().enumerate() {
                n_ut[u][offset + j] = tb.n;
            }
            offset += self.tables[u].len();
        }
        let q_k: Vec<usize> = self.comps.iter().map(|c| c.q).collect();
        CountStats {
            n_u: self.t.iter().map(Vec::len).collect(),
            n_ut,
            n_uk: (0..groups)
                .map(|u| self.comps.iter().map(|c| c.stats.count(u)).collect())
                .collect(),
            m_u: self.tables.iter().map(Vec::len).collect(),
            m_uk: self.m_uk.clone(),
            q_total: q_k.iter().sum(),
            k: q_k.iter().filter(|&&q| q > 0).count(),
            q_k,
        }
    }

    pub fn recompute_counts(&self) -> Result<CountStats> {
        for (u, tu) in self.t.iter().enumerate() {
            for (i, &j) in tu.iter().enumerate() {
                if j >= self.tables[u].len() {
                    return Err(Error::Corruption(format!(
                        "t[{u}][{i}] = {j} but group {u} has only {} instances",
                        self.tables[u].len()
                    )));
                }
            }
        }
        let (t, k_of_t) = self.global_indices();
        counts_from_indices(&t, &k_of_t, self.n_components())
    }

    /// Labels `z = k ∘ t`.
    pub fn z(&self) -> Vec<Vec<usize>> {
        self.t
            .iter()
            .enumerate()
            .map(|(u, tu)| tu.iter().map(|&j| self.tables[u][j].k).collect())
            .collect()
    }

    pub fn validate(&self, data: &GroupedDataset) -> Result<()> {
        let fresh = self.recompute_counts()?;
        fresh.check()?;
        if fresh != self.counts() {
            return Err(Error::Corruption(
                "incremental counts differ from recomputed counts".into(),
            ));
        }
        for (u, tabs) in self.tables.iter().enumerate() {
            if let Some(j) = tabs.iter().position(|tb| tb.n == 0) {
                return Err(Error::Corruption(format!(
                    "instance {j} of group {u} is empty"
                )));
            }
        }
        if let Some(k) = self.comps.iter().position(|c| c.q == 0) {
            return Err(Error::Corruption(format!("component {k} has no instances")));
        }
        if data.group_sizes() != fresh.n_u {
            return Err(Error::Corruption(
                "state does not match dataset shape".into(),
            ));
        }
        Ok(())
    }

    fn delete_component(&mut self, k: usize) {
        self.comps.remove(k);
        for row in self.m_uk.iter_mut() {
            row.remove(k);
        }
        for tabs in self.tables.iter_mut() {
            for tb in tabs.iter_mut() {
                if tb.k > k {
                    tb.k -= 1;
                }
            }
        }
    }

    fn new_component(&mut self, h: &BaseMeasure) -> usize {
        self.comps.push(Component::from_prior(h));
        for row in self.m_uk.iter_mut() {
            row.push(0);
        }
        self.comps.len() - 1
    }

    /// Drop table `j` of group `u` (already empty) and its component if that
    /// was the component's last table. Returns true if the component went.
    fn delete_table(&mut self, u: usize, j: usize) -> bool {
        let k = self.tables[u].remove(j).k;
        for tj in self.t[u].iter_mut() {
            if *tj > j {
                *tj -= 1;
            }
        }
        self.m_uk[u][k] -= 1;
        self.comps[k].q -= 1;
        if self.comps[k].q == 0 {
            self.delete_component(k);
            true
        } else {
            false
        }
    }

    fn open_table(&mut self, u: usize, k: usize) -> usize {
        self.tables[u].push(Table { k, n: 0 });
        self.m_uk[u][k] += 1;
        self.comps[k].q += 1;
        self.tables[u].len() - 1
    }
}

#[derive(Debug, Clone)]
pub struct MarginalSampler<'a> {
    pub data: &'a GroupedDataset,
    pub h: BaseMeasure,
    pub state: MarginalState,
    pub opts: SamplerOptions,
}

impl<'a> MarginalSampler<'a> {
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
        if opts.kernel_mh.is_some() {
            return Err(Error::Unsupported(
                "kernel resampling is only available with the conditional sampler".into(),
            ));
        }
        let k0 = match opts.init {
            _ if data.total() == 0 => 0,
            Init::Single => 1,
            Init::Random(k) => k.max(1),
        };
        let mut state = MarginalState {
            t: data.groups().iter().map(|g| vec![0; g.len()]).collect(),
            tables: vec![Vec::new(); m],
            comps: Vec::new(),
            m_uk: vec![Vec::new(); m],
            hyper,
        };
        for _ in 0..k0 {
            state.new_component(&h);
        }
        // one table per (group, component) that receives data
        let s2 = state.hyper.sigma2_eps;
        for u in 0..m {
            let mut table_of = vec![usize::MAX; k0];
            for i in 0..data.n_u(u) {
                let k = if k0 > 1 { rng.random_range(0..k0) } else { 0 };
                if table_of[k] == usize::MAX {
                    table_of[k] = state.open_table(u, k);
                }
                let j = table_of[k];
                state.t[u][i] = j;
                state.tables[u][j].n += 1;
                state.comps[k].stats.add(u, data.group(u)[i]);
            }
        }
        for k in (0..state.comps.len()).rev() {
            if state.comps[k].q == 0 {
                state.delete_component(k);
            }
        }
        for c in state.comps.iter_mut() {
            c.refresh(&h, s2)?;
        }
        let s = Self {
            data,
            h,
            state,
            opts,
        };
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

    fn refresh_all(&mut self) -> Result<()> {
        let s2 = self.state.hyper.sigma2_eps;
        for c in self.state.comps.iter_mut() {
            c.refresh(&self.h, s2)?;
        }
        Ok(())
    }

    /// Log weights for `t_ui` given the observation is removed: one per
    /// existing table of group `u`, then the new-table weight. Also returns
    /// the per-component log predictives and the new-component one.
    pub fn t_log_weights(&self, u: usize, y: f64) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let st = &self.state;
        let s2 = st.hyper.sigma2_eps;
        let gamma = st.hyper.gamma;
        let lf: Vec<f64> = st.comps.iter().map(|c| c.ln_predictive(y, u, s2)).collect();
        let lf_new = conjugate::ln_predictive_new(&self.h, u, y, s2)?;
        let mut w: Vec<f64> = st.tables[u]
            .iter()
            .map(|tb| (tb.n as f64).ln() + lf[tb.k])
            .collect();
        let q_total: usize = st.comps.iter().map(|c| c.q).sum();
        let mut mix: Vec<f64> = st
            .comps
            .iter()
            .zip(&lf)
            .map(|(c, l)| (c.q as f64).ln() + l)
            .collect();
        mix.push(gamma.ln() + lf_new);
        w.push(st.hyper.alpha[u].ln() + dist::log_sum_exp(&mix) - (q_total as f64 + gamma).ln());
        Ok((w, lf, lf_new))
    }

    pub fn sample_t<R: Rng + ?Sized>(&mut self, u: usize, i: usize, rng: &mut R) -> Result<()> {
        let y = self.data.group(u)[i];
        let s2 = self.state.hyper.sigma2_eps;
        let st = &mut self.state;
        let j0 = st.t[u][i];
        let k0 = st.tables[u][j0].k;
        let saved = (st.comps[k0].mean.clone(), st.comps[k0].cov.clone());
        st.tables[u][j0].n -= 1;
        st.comps[k0].remove_block(u, 1, y, s2, &self.h);
        let mut restore = Some(k0);
        if st.tables[u][j0].n == 0 && st.delete_table(u, j0) {
            restore = None;
        }
        let (w, lf, lf_new) = self.t_log_weights(u, y)?;
        let choice = dist::sample_log_categorical(&w, rng)?;
        let st = &mut self.state;
        let j = if choice < st.tables[u].len() {
            choice
        } else {
            let mut ks: Vec<f64> = st
                .comps
                .iter()
                .zip(&lf)
                .map(|(c, l)| (c.q as f64).ln() + l)
                .collect();
            ks.push(st.hyper.gamma.ln() + lf_new);
            let mut k = dist::sample_log_categorical(&ks, rng)?;
            if k == st.comps.len() {
                k = st.new_component(&self.h);
            }
            st.open_table(u, k)
        };
        st.t[u][i] = j;
        st.tables[u][j].n += 1;
        let k = st.tables[u][j].k;
        if restore == Some(k) {
            let c = &mut st.comps[k];
            c.stats.add(u, y);
            c.mean = saved.0;
            c.cov = saved.1;
        } else {
            st.comps[k].add_block(u, 1, y, s2);
        }
        Ok(())
    }

    /// Log weights for the component of a detached block at slot `u`:
    /// existing components then a new one.
    pub fn k_log_weights(&self, u: usize, block: &SlotBlock) -> Vec<f64> {
        let st = &self.state;
        let s2 = st.hyper.sigma2_eps;
        let mut w: Vec<f64> = st
            .comps
            .iter()
            .map(|c| {
                (c.q as f64).ln()
                    + conjugate::ln_block_given_slot(block, c.mean[u], c.cov[(u, u)], s2)
            })
            .collect();
        let (m0, c0) = self.h.marginal_slot(u);
        w.push(st.hyper.gamma.ln() + conjugate::ln_block_given_slot(block, m0, c0, s2));
        w
    }

    pub fn sample_k<R: Rng + ?Sized>(
        &mut self,
        u: usize,
        j: usize,
        block: &SlotBlock,
        sum: f64,
        rng: &mut R,
    ) -> Result<()> {
        if block.n == 0 {
            return Err(Error::Corruption(format!(
                "instance {j} of group {u} is empty"
            )));
        }
        let s2 = self.state.hyper.sigma2_eps;
        let st = &mut self.state;
        let k0 = st.tables[u][j].k;
        let saved = (st.comps[k0].mean.clone(), st.comps[k0].cov.clone());
        st.comps[k0].remove_block(u, block.n, sum, s2, &self.h);
        st.m_uk[u][k0] -= 1;
        st.comps[k0].q -= 1;
        let mut restore = Some(k0);
        if st.comps[k0].q == 0 {
            st.delete_component(k0);
            restore = None;
        }
        let w = self.k_log_weights(u, block);
        let st = &mut self.state;
        let mut k = dist::sample_log_categorical(&w, rng)?;
        if k == st.comps.len() {
            k = st.new_component(&self.h);
        }
        st.tables[u][j].k = k;
        st.m_uk[u][k] += 1;
        st.comps[k].q += 1;
        if restore == Some(k) {
            let c = &mut st.comps[k];
            c.stats.add_many(u, block.n, sum);
            c.mean = saved.0;
            c.cov = saved.1;
        } else {
            st.comps[k].add_block(u, block.n, sum, s2);
        }
        Ok(())
    }

    fn sample_all_k<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        for u in 0..self.h.len() {
            let n_tab = self.state.tables[u].len();
            let mut members: Vec<Vec<f64>> = vec![Vec::new(); n_tab];
            for (i, &j) in self.state.t[u].iter().enumerate() {
                members[j].push(self.data.group(u)[i]);
            }
            for (j, ys) in members.iter().enumerate() {
                let block = SlotBlock::from_values(ys);
                let sum = ys.iter().sum();
                self.sample_k(u, j, &block, sum, rng)?;
            }
        }
        Ok(())
    }

    fn sample_sigma_eps<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        if !self.state.hyper.resample_sigma2 {
            return Ok(());
        }
        let s2 = self.state.hyper.sigma2_eps;
        let atoms: Vec<Vec<f64>> = self
            .state
            .comps
            .iter()
            .map(|c| LatentPosterior::new(&self.h, &c.stats, s2).map(|p| p.sample(&self.h, rng)))
            .collect::<Result<_>>()?;
        let mut ss = 0.0;
        for (u, g) in self.data.groups().iter().enumerate() {
            for (i, &y) in g.iter().enumerate() {
                let k = self.state.tables[u][self.state.t[u][i]].k;
                let d = y - atoms[k][u];
                ss += d * d;
            }
        }
        let hp = &mut self.state.hyper;
        hp.sigma2_eps = hyper::sample_sigma2(&hp.sigma2_prior, self.data.total(), ss, rng)?;
        self.refresh_all()
    }
}

impl Sampler for MarginalSampler<'_> {
    fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.refresh_all()?;
        for u in 0..self.h.len() {
            for i in 0..self.data.n_u(u) {
                self.sample_t(u, i, rng)?;
            }
        }
        self.check("instance update")?;
        self.sample_all_k(rng)?;
        self.check("component update")?;
        let counts = self.state.counts();
        update_concentrations(&mut self.state.hyper, &counts, rng)?;
        self.sample_sigma_eps(rng)?;
        self.check("hyperparameter update")
    }

    fn record<R: Rng + ?Sized>(&self, sweep: usize, aux: &mut R) -> Result<TraceRecord> {
        let st = &self.state;
        let s2 = st.hyper.sigma2_eps;
        let atoms = st
            .comps
            .iter()
            .map(|c| LatentPosterior::new(&self.h, &c.stats, s2).map(|p| p.sample(&self.h, aux)))
            .collect::<Result<_>>()?;
        Ok(TraceRecord {
            sweep,
            k: st.n_components(),
            gamma: st.hyper.gamma,
            alpha: st.hyper.alpha.clone(),
            sigma2: s2,
            z: st.z(),
            atoms,
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CovariateGrid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn normalize(w: &[f64]) -> Vec<f64> {
        let norm = dist::log_sum_exp(w);
        w.iter().map(|x| (x - norm).exp()).collect()
    }

    fn lnp(h: &BaseMeasure, obs: &[(usize, f64)], s2: f64) -> f64 {
        conjugate::ln_predictive_block(h, &SuffStats::new(h.len()), obs, s2).unwrap()
    }

    /// State with observation `i` of group `u` at table `layout[u][i]`, whose
    /// component is `ks[u][table]`.
    fn build<'a>(
        data: &'a GroupedDataset,
        h: &BaseMeasure,
        hp: HyperParams,
        layout: &[Vec<usize>],
        ks: &[Vec<usize>],
    ) -> MarginalSampler<'a> {
        let m = h.len();
        let kk = ks.iter().flatten().max().map_or(0, |k| k + 1);
        let mut state = MarginalState {
            t: layout.to_vec(),
            tables: vec![Vec::new(); m],
            comps: Vec::new(),
            m_uk: vec![Vec::new(); m],
            hyper: hp,
        };
        for _ in 0..kk {
            state.new_component(h);
        }
        for u in 0..m {
            for &k in &ks[u] {
                state.open_table(u, k);
            }
            for (i, &j) in layout[u].iter().enumerate() {
                state.tables[u][j].n += 1;
                let k = state.tables[u][j].k;
                state.comps[k].stats.add(u, data.group(u)[i]);
            }
        }
        let opts = SamplerOptions {
            debug_checks: true,
            ..Default::default()
        };
        let mut s = MarginalSampler {
            data,
            h: h.clone(),
            state,
            opts,
        };
        s.refresh_all().unwrap();
        s.state.validate(data).unwrap();
        s
    }

    fn two_slots() -> BaseMeasure {
        BaseMeasure::gp(&CovariateGrid::regular_1d(2), 0.0, 1.0, 0.5).unwrap()
    }

    #[test]
    fn first_observation_opens_instance_and_component() {
        let h = two_slots();
        let data = GroupedDataset::new(vec![vec![0.4], vec![]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = build(
            &data,
            &h,
            HyperParams::fixed(1.0, 1.0, 0.2, 2),
            &[vec![0], vec![]],
            &[vec![0], vec![]],
        );
        for _ in 0..20 {
            s.sample_t(0, 0, &mut rng).unwrap();
            assert_eq!(s.state.n_components(), 1);
            assert_eq!(s.state.tables[0], vec![Table { k: 0, n: 1 }]);
            s.state.validate(&data).unwrap();
        }
    }

    #[test]
    fn instance_odds_enumerated() {
        let h = two_slots();
        let (s2, gamma, alpha) = (0.3, 0.7, 1.6);
        let data = GroupedDataset::new(vec![vec![0.5, 0.2], vec![]]).unwrap();
        let mut s = build(
            &data,
            &h,
            HyperParams::fixed(gamma, alpha, s2, 2),
            &[vec![0, 0], vec![]],
            &[vec![0], vec![]],
        );
        let y = 0.2;
        s.state.tables[0][0].n -= 1;
        s.state.comps[0].remove_block(0, 1, y, s2, &h);
        let (w, _, _) = s.t_log_weights(0, y).unwrap();
        let p = normalize(&w);
        // q = 1 after detaching: existing table n = 1, component mass 1/(1+γ)
        let f1 = (lnp(&h, &[(0, 0.5), (0, y)], s2) - lnp(&h, &[(0, 0.5)], s2)).exp();
        let f_new = lnp(&h, &[(0, y)], s2).exp();
        let a = f1;
        let b = alpha * (f1 / (1.0 + gamma) + gamma / (1.0 + gamma) * f_new);
        assert!((p[0] - a / (a + b)).abs() < 1e-10, "{p:?}");
    }

    #[test]
    fn emptied_instance_is_deleted() {
        let h = two_slots();
        let data = GroupedDataset::new(vec![vec![-3.0, -3.1, 0.1, 3.0, 3.1], vec![0.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let hp = HyperParams::fixed(1.0, 1.0, 0.01, 2);
        let base = build(
            &data,
            &h,
            hp,
            &[vec![0, 0, 1, 2, 2], vec![0]],
            &[vec![0, 1, 0], vec![1]],
        );
        for _ in 0..200 {
            let mut s = base.clone();
            s.sample_t(0, 2, &mut rng).unwrap();
            s.state.validate(&data).unwrap();
            let j = s.state.t[0][2];
            let alone = s.state.tables[0][j].n == 1;
            assert_eq!(s.state.tables[0].len(), if alone { 3 } else { 2 });
            assert_eq!(
                s.state.recompute_counts().unwrap().m_u[0],
                s.state.tables[0].len()
            );
        }
    }

    #[test]
    fn component_odds_two_term() {
        let h = two_slots();
        let (s2, gamma) = (0.25, 0.8);
        let data = GroupedDataset::new(vec![vec![0.3, 0.5], vec![0.6, 0.2]]).unwrap();
        let mut s = build(
            &data,
            &h,
            HyperParams::fixed(gamma, 1.0, s2, 2),
            &[vec![0, 0], vec![0, 0]],
            &[vec![0], vec![0]],
        );
        // detach group 1's instance
        let block = SlotBlock::from_values(&[0.6, 0.2]);
        s.state.comps[0].remove_block(1, 2, 0.8, s2, &h);
        s.state.m_uk[1][0] -= 1;
        s.state.comps[0].q -= 1;
        let p = normalize(&s.k_log_weights(1, &block));
        let all = [(0, 0.3), (0, 0.5), (1, 0.6), (1, 0.2)];
        let f1 = (lnp(&h, &all, s2) - lnp(&h, &all[..2], s2)).exp();
        let f_new = lnp(&h, &all[2..], s2).exp();
        assert!((p[0] - f1 / (f1 + gamma * f_new)).abs() < 1e-10);
    }

    #[test]
    fn component_odds_symmetric() {
        let h = two_slots();
        let data = GroupedDataset::new(vec![vec![-1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let layout = [vec![0, 1], vec![0, 1]];
        let s = build(
            &data,
            &h,
            HyperParams::fixed(1.0, 1.0, 0.1, 2),
            &layout,
            &layout,
        );
        let block = SlotBlock::from_values(&[0.0]);
        let w = s.k_log_weights(1, &block);
        assert!((w[0] - w[1]).abs() < 1e-12);
    }

    fn run(seed: u64, data: &GroupedDataset, sweeps: usize) -> Vec<TraceRecord> {
        let h = BaseMeasure::gp(&CovariateGrid::regular_1d(3), 0.0, 1.0, 0.3).unwrap();
        let mut hp = HyperParams::fixed(1.0, 1.0, 0.2, 3);
        hp.resample_gamma = true;
        hp.resample_alpha = true;
        hp.resample_sigma2 = true;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let opts = SamplerOptions {
            debug_checks: true,
            init: Init::Random(3),
            ..Default::default()
        };
        let mut s = MarginalSampler::new(data, h, hp, opts, &mut rng).unwrap();
        (0..sweeps)
            .map(|i| {
                s.sweep(&mut rng).unwrap();
                for (u, tu) in s.state.t.iter().enumerate() {
                    assert!(tu.iter().all(|&j| j < s.state.tables[u].len()));
                }
                s.record(i, &mut rng).unwrap()
            })
            .collect()
    }

    #[test]
    fn seed_determinism_and_invariants() {
        let data = GroupedDataset::new(vec![
            vec![-1.1, -0.9, 1.0, 1.2, 0.1],
            vec![-1.0, 1.1, 0.9],
            vec![0.0, -1.2, 1.3, 1.0],
        ])
        .unwrap();
        let a = run(21, &data, 150);
        let b = run(21, &data, 150);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.z, y.z);
            assert_eq!(x.atoms, y.atoms);
            assert_eq!(x.alpha, y.alpha);
        }
    }

    #[test]
    fn kalman_tracks_refresh() {
        let h = BaseMeasure::markov_chain(&CovariateGrid::regular_1d(4), 0.2, 1.0, 0.4).unwrap();
        let mut c = Component::from_prior(&h);
        let obs = [(0, 0.3), (2, -0.4), (2, 0.1), (3, 1.0)];
        for &(u, y) in &obs {
            c.add_block(u, 1, y, 0.2);
        }
        c.remove_block(2, 1, -0.4, 0.2, &h);
        let mut fresh = c.clone();
        fresh.refresh(&h, 0.2).unwrap();
        for i in 0..4 {
            assert!((c.mean[i] - fresh.mean[i]).abs() < 1e-10);
            for j in 0..4 {
                assert!((c.cov[(i, j)] - fresh.cov[(i, j)]).abs() < 1e-10);
            }
        }
    }
}
