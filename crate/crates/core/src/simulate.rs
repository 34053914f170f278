//! Synthetic datasets with known ground truth.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::base_measure::BaseMeasure;
use crate::dist;
use crate::error::{Error, Result};
use crate::model::{CovariateGrid, GroupedDataset};

/// Give up after this many rejected atom draws.
const MAX_REJECTIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub preset: String,
    pub seed: u64,
    /// True atoms, `K_true × M`.
    pub atoms: Vec<Vec<f64>>,
    /// True component per observation, `[u][i]`.
    pub labels: Vec<Vec<usize>>,
    /// Atoms that generate data at each slot.
    pub active: Vec<Vec<usize>>,
    pub sigma_eps: f64,
    pub kernel_sigma2: f64,
    pub kernel_omega: f64,
    /// Slope of the mean function (dataset B).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_mu: Option<f64>,
    /// Atom sets discarded for being indistinguishable.
    pub rejections: usize,
    /// Curve of each stream (two-group surrogate).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream_group: Option<Vec<usize>>,
    /// Inclusive slot ranges where the curves coincide and where they are fully apart.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early: Option<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub late: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub grid: CovariateGrid,
    pub data: GroupedDataset,
    pub truth: SyntheticTruth,
}

/// True if two atoms stay within `tol` of each other at every listed slot.
fn indistinct(a: &[f64], b: &[f64], slots: &[usize], tol: f64) -> bool {
    slots.iter().all(|&u| (a[u] - b[u]).abs() < tol)
}

/// Draw `y = φ_k(u) + σ ε` for the given labels and shuffle within the group.
fn fill_group<R: Rng + ?Sized>(
    labels: Vec<usize>,
    atoms: &[Vec<f64>],
    u: usize,
    sigma: f64,
    rng: &mut R,
) -> (Vec<f64>, Vec<usize>) {
    let mut labels = labels;
    labels.shuffle(rng);
    let ys = labels
        .iter()
        .map(|&k| atoms[k][u] + sigma * dist::std_normal(rng))
        .collect();
    (ys, labels)
}

/// Fifteen slots, five GP atoms, 20 observations per atom per slot, noise sd 0.1.
pub fn gen_dataset_a(seed: u64) -> Result<Synthetic> {
    let (m, k_true, per, sigma, s2, omega) = (15, 5, 20, 0.1, 1.0, 0.01);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = CovariateGrid::regular_1d(m);
    let h = BaseMeasure::gp(&grid, 0.0, s2, omega)?;
    let slots: Vec<usize> = (0..m).collect();
    let mut rejections = 0;
    let atoms = loop {
        let atoms: Vec<Vec<f64>> = (0..k_true).map(|_| h.sample_atom(&mut rng)).collect();
        let clash = (0..k_true).any(|a| {
            (a + 1..k_true).any(|b| indistinct(&atoms[a], &atoms[b], &slots, 3.0 * sigma))
        });
        if !clash {
            break atoms;
        }
        rejections += 1;
        if rejections > MAX_REJECTIONS {
            return Err(Error::Numerical(
                "could not draw distinguishable atoms".into(),
            ));
        }
    };
    let mut groups = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for u in 0..m {
        let lab: Vec<usize> = (0..k_true)
            .flat_map(|k| std::iter::repeat_n(k, per))
            .collect();
        let (ys, lab) = fill_group(lab, &atoms, u, sigma, &mut rng);
        groups.push(ys);
        labels.push(lab);
    }
    Ok(Synthetic {
        grid,
        data: GroupedDataset::new(groups)?,
        truth: SyntheticTruth {
            preset: "A".into(),
            seed,
            atoms,
            labels,
            active: vec![(0..k_true).collect(); m],
            sigma_eps: sigma,
            kernel_sigma2: s2,
            kernel_omega: omega,
            beta_mu: None,
            rejections,
            stream_group: None,
            early: None,
            late: None,
        },
    })
}

/// Bifurcating trajectories: one atom on slots 1–4, a second from slot 5, a
/// third from slot 10; 30 observations per slot, noise sd 0.2.
pub fn gen_dataset_b(seed: u64) -> Result<Synthetic> {
    let (m, total, sigma, s2, omega) = (15usize, 30usize, 0.2, 1.0, 0.05);
    // 0-based first active slot of each atom and the slot where it is pinned to its parent
    let starts = [0usize, 4, 9];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = CovariateGrid::regular_1d(m);
    let beta_mu = rng.random_range(-0.2..0.2);
    let mean: Vec<f64> = (1..=m).map(|u| beta_mu * u as f64).collect();
    let h = BaseMeasure::new(
        crate::base_measure::Kernel::Gp { sigma2: s2, omega },
        mean,
        &grid,
        crate::base_measure::DEFAULT_JITTER,
    )?;
    let active: Vec<Vec<usize>> = (0..m)
        .map(|u| (0..3).filter(|&k| u >= starts[k]).collect())
        .collect();
    let mut rejections = 0;
    let atoms = loop {
        let mut atoms: Vec<Vec<f64>> = Vec::with_capacity(3);
        atoms.push(h.sample_atom(&mut rng));
        for k in 1..3 {
            let mut a = h.sample_atom(&mut rng);
            let pin = starts[k] - 1;
            let shift = atoms[k - 1][pin] - a[pin];
            a.iter_mut().for_each(|x| *x += shift);
            // exact equality at the pinned slot
            a[pin] = atoms[k - 1][pin];
            atoms.push(a);
        }
        let clash = (0..3).any(|a| {
            (a + 1..3).any(|b| {
                let shared: Vec<usize> = (starts[b]..m).collect();
                indistinct(&atoms[a], &atoms[b], &shared, 3.0 * sigma)
            })
        });
        if !clash {
            break atoms;
        }
        rejections += 1;
        if rejections > MAX_REJECTIONS {
            return Err(Error::Numerical(
                "could not draw distinguishable atoms".into(),
            ));
        }
    };
    let mut groups = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for u in 0..m {
        let act = &active[u];
        let base = total / act.len();
        let extra = total % act.len();
        let lab: Vec<usize> = act
            .iter()
            .enumerate()
            .flat_map(|(j, &k)| std::iter::repeat_n(k, base + usize::from(j < extra)))
            .collect();
        let (ys, lab) = fill_group(lab, &atoms, u, sigma, &mut rng);
        groups.push(ys);
        labels.push(lab);
    }
    Ok(Synthetic {
        grid,
        data: GroupedDataset::new(groups)?,
        truth: SyntheticTruth {
            preset: "B".into(),
            seed,
            atoms,
            labels,
            active,
            sigma_eps: sigma,
            kernel_sigma2: s2,
            kernel_omega: omega,
            beta_mu: Some(beta_mu),
            rejections,
            stream_group: None,
            early: None,
            late: None,
        },
    })
}

/// Two smooth mean curves over `horizon` days that coincide for the first
/// two thirds and then separate by `7.5 σ_ε`; each subject follows one curve
/// (two thirds on the first) and contributes one observation per day.
pub fn gen_two_group(seed: u64, n_subjects: usize, horizon: usize) -> Result<Synthetic> {
    if n_subjects < 2 {
        return Err(Error::Parameter("need at least two subjects".into()));
    }
    if horizon < 6 {
        return Err(Error::Parameter("horizon must be at least 6".into()));
    }
    let sigma = 0.2;
    let gap = 7.5 * sigma;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = CovariateGrid::regular_1d(horizon);
    let early_end = (2 * horizon) / 3 - 1;
    let late_start = early_end + 2;
    let base =
        |u: usize| 0.5 * (2.0 * std::f64::consts::PI * (u + 1) as f64 / horizon as f64).sin();
    let sep = |u: usize| {
        if u <= early_end {
            0.0
        } else {
            gap * ((u - early_end) as f64 / (late_start - early_end) as f64).min(1.0)
        }
    };
    let atoms = vec![
        (0..horizon).map(base).collect::<Vec<f64>>(),
        (0..horizon).map(|u| base(u) + sep(u)).collect(),
    ];
    let n_first = ((2 * n_subjects) / 3).clamp(1, n_subjects - 1);
    let stream_group: Vec<usize> = (0..n_subjects).map(|s| usize::from(s >= n_first)).collect();
    let mut groups = Vec::with_capacity(horizon);
    let mut streams = Vec::with_capacity(horizon);
    let mut labels = Vec::with_capacity(horizon);
    for u in 0..horizon {
        groups.push(
            stream_group
                .iter()
                .map(|&g| atoms[g][u] + sigma * dist::std_normal(&mut rng))
                .collect(),
        );
        streams.push((0..n_subjects as u64).collect());
        labels.push(stream_group.clone());
    }
    Ok(Synthetic {
        grid,
        data: GroupedDataset::with_streams(groups, Some(streams))?,
        truth: SyntheticTruth {
            preset: "twogroup".into(),
            seed,
            atoms,
            labels,
            active: (0..horizon)
                .map(|u| if sep(u) > 0.0 { vec![0, 1] } else { vec![0] })
                .collect(),
            sigma_eps: sigma,
            kernel_sigma2: 1.0,
            kernel_omega: 0.05,
            beta_mu: None,
            rejections: 0,
            stream_group: Some(stream_group),
            early: Some((0, early_end)),
            late: Some((late_start, horizon - 1)),
        },
    })
}
