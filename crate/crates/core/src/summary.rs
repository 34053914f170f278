//! Posterior summaries of pooled trace records.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::trace::TraceRecord;

/// Occupied component labels of a record, in order of first appearance
/// over observations taken group by group.
fn occupied(rec: &TraceRecord) -> Vec<usize> {
    let mut seen = Vec::new();
    for &k in rec.z.iter().flatten() {
        if !seen.contains(&k) {
            seen.push(k);
        }
    }
    seen
}

fn table(counts: BTreeMap<usize, usize>, n: usize) -> BTreeMap<usize, f64> {
    counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / n as f64))
        .collect()
}

fn nonempty(records: &[TraceRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Parameter("no trace records to summarize".into()));
    }
    Ok(())
}

/// Distribution of the number of occupied components.
pub fn k_posterior(records: &[TraceRecord]) -> Result<BTreeMap<usize, f64>> {
    nonempty(records)?;
    let mut counts = BTreeMap::new();
    for r in records {
        *counts.entry(occupied(r).len()).or_insert(0) += 1;
    }
    Ok(table(counts, records.len()))
}

/// Distribution of the number of distinct components used at slot `u`.
pub fn local_k_posterior(records: &[TraceRecord], u: usize) -> Result<BTreeMap<usize, f64>> {
    nonempty(records)?;
    let mut counts = BTreeMap::new();
    for r in records {
        let zu =
            r.z.get(u)
                .ok_or_else(|| Error::Parameter(format!("slot {u} outside the trace")))?;
        let mut ks: Vec<usize> = zu.clone();
        ks.sort_unstable();
        ks.dedup();
        *counts.entry(ks.len()).or_insert(0) += 1;
    }
    Ok(table(counts, records.len()))
}

/// Most probable value of a table; ties go to the smaller value.
pub fn mode(table: &BTreeMap<usize, f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (&k, &p) in table {
        if best.is_none_or(|(_, bp)| p > bp) {
            best = Some((k, p));
        }
    }
    best.map(|(k, _)| k)
}

/// Empirical quantile with linear interpolation between order statistics
/// (Hyndman–Fan type 7).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub mean: Vec<f64>,
    pub q05: Vec<f64>,
    pub q95: Vec<f64>,
    /// Pointwise posterior standard deviation.
    pub sd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtomCurves {
    pub k: usize,
    pub curves: Vec<Curve>,
    /// Records that entered the summary.
    pub used: usize,
    /// Records kept with their own label order because no label of the
    /// reference could be matched to them.
    pub unaligned: usize,
}

/// Map each occupied label of `rec` to a reference cluster by greedy
/// maximum observation overlap; ties go to the smaller index.
fn align(
    rec: &TraceRecord,
    ref_labels: &[usize],
    reference: &TraceRecord,
) -> Option<Vec<(usize, usize)>> {
    let mine = occupied(rec);
    let k = ref_labels.len();
    let ref_pos = |l: usize| ref_labels.iter().position(|&x| x == l);
    let mut overlap = vec![vec![0usize; k]; k];
    for (zr, zs) in rec.z.iter().zip(&reference.z) {
        for (&a, &b) in zr.iter().zip(zs) {
            let i = mine.iter().position(|&x| x == a)?;
            let j = ref_pos(b)?;
            overlap[i][j] += 1;
        }
    }
    let mut pairs = Vec::with_capacity(k);
    let mut used_i = vec![false; k];
    let mut used_j = vec![false; k];
    for _ in 0..k {
        let mut best: Option<(usize, usize, usize)> = None;
        for i in (0..k).filter(|&i| !used_i[i]) {
            for j in (0..k).filter(|&j| !used_j[j]) {
                if best.is_none_or(|(_, _, c)| overlap[i][j] > c) {
                    best = Some((i, j, overlap[i][j]));
                }
            }
        }
        let (i, j, _) = best?;
        used_i[i] = true;
        used_j[j] = true;
        pairs.push((mine[i], j));
    }
    Some(pairs)
}

/// Per-cluster mean curves and pointwise 5%/95% quantiles over records
/// whose occupied count equals the posterior mode, aligned to the first
/// such record. Reference clusters are ordered by first appearance.
pub fn atom_curves(records: &[TraceRecord]) -> Result<AtomCurves> {
    let kp = k_posterior(records)?;
    let k = mode(&kp).expect("nonempty table");
    let subset: Vec<&TraceRecord> = records.iter().filter(|r| occupied(r).len() == k).collect();
    let reference = subset[0];
    let ref_labels = occupied(reference);
    let m = reference.atoms.first().map_or(0, Vec::len);
    let mut values = vec![vec![Vec::with_capacity(subset.len()); m]; k];
    let mut unaligned = 0;
    for rec in &subset {
        let pairs = match align(rec, &ref_labels, reference) {
            Some(p) => p,
            None => {
                unaligned += 1;
                occupied(rec).into_iter().zip(0..k).collect()
            }
        };
        for (label, j) in pairs {
            let atom = rec
                .atoms
                .get(label)
                .ok_or_else(|| Error::Data(format!("record {} has no atom {label}", rec.sweep)))?;
            for u in 0..m {
                values[j][u].push(atom[u]);
            }
        }
    }
    let curves = values
        .into_iter()
        .map(|slots| {
            let mut c = Curve {
                mean: Vec::new(),
                q05: Vec::new(),
                q95: Vec::new(),
                sd: Vec::new(),
            };
            for mut v in slots {
                v.sort_by(f64::total_cmp);
                c.mean.push(v.iter().sum::<f64>() / v.len() as f64);
                c.q05.push(quantile(&v, 0.05));
                c.q95.push(quantile(&v, 0.95));
                let mean = *c.mean.last().expect("pushed");
                let ss: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
                c.sd.push(if v.len() > 1 {
                    (ss / (v.len() - 1) as f64).sqrt()
                } else {
                    0.0
                });
            }
            c
        })
        .collect();
    Ok(AtomCurves {
        k,
        curves,
        used: subset.len(),
        unaligned,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoClustering {
    pub streams: Vec<u64>,
    pub matrix: Vec<Vec<f64>>,
}

/// Probability that two streams share a component, averaged over records
/// and over the slots in `slots` where both streams are observed.
pub fn coclustering(
    records: &[TraceRecord],
    streams: Option<&[Vec<u64>]>,
    slots: std::ops::RangeInclusive<usize>,
) -> Result<CoClustering> {
    let streams = streams.ok_or_else(|| {
        Error::Unsupported("co-clustering needs stream ids in the dataset".into())
    })?;
    nonempty(records)?;
    let mut ids: Vec<u64> = streams.iter().flatten().copied().collect();
    ids.sort_unstable();
    ids.dedup();
    let s = ids.len();
    let pos: BTreeMap<u64, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut hits = vec![vec![0.0; s]; s];
    let mut seen = vec![vec![0.0; s]; s];
    for u in slots {
        let ids_u = streams
            .get(u)
            .ok_or_else(|| Error::Parameter(format!("slot {u} outside the dataset")))?;
        let members: Vec<(usize, usize)> = ids_u
            .iter()
            .enumerate()
            .map(|(i, id)| (i, pos[id]))
            .collect();
        for r in records {
            let zu = &r.z[u];
            for &(i, a) in &members {
                for &(j, b) in &members {
                    seen[a][b] += 1.0;
                    if zu[i] == zu[j] {
                        hits[a][b] += 1.0;
                    }
                }
            }
        }
    }
    let matrix = (0..s)
        .map(|a| {
            (0..s)
                .map(|b| {
                    if a == b {
                        1.0
                    } else if seen[a][b] > 0.0 {
                        hits[a][b] / seen[a][b]
                    } else {
                        f64::NAN
                    }
                })
                .collect()
        })
        .collect();
    Ok(CoClustering {
        streams: ids,
        matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(z: Vec<Vec<usize>>, atoms: Vec<Vec<f64>>) -> TraceRecord {
        let m = z.len();
        TraceRecord {
            sweep: 0,
            k: atoms.len(),
            gamma: 1.0,
            alpha: vec![1.0; m],
            sigma2: 0.1,
            z,
            atoms,
        }
    }

    fn relabel(r: &TraceRecord, perm: &[usize]) -> TraceRecord {
        let mut atoms = vec![Vec::new(); r.atoms.len()];
        for (k, a) in r.atoms.iter().enumerate() {
            atoms[perm[k]] = a.clone();
        }
        let z =
            r.z.iter()
                .map(|g| g.iter().map(|&k| perm[k]).collect())
                .collect();
        TraceRecord {
            z,
            atoms,
            ..r.clone()
        }
    }

    fn sample_trace() -> Vec<TraceRecord> {
        vec![
            rec(
                vec![vec![0, 0, 1], vec![1, 0]],
                vec![vec![0.0, 0.1], vec![1.0, 1.1]],
            ),
            rec(
                vec![vec![1, 1, 0], vec![0, 1]],
                vec![vec![1.2, 1.3], vec![0.2, 0.3]],
            ),
            rec(vec![vec![0, 0, 0], vec![0, 0]], vec![vec![0.5, 0.5]]),
            rec(
                vec![vec![0, 1, 1], vec![1, 0]],
                vec![vec![-0.2, 0.0], vec![0.9, 1.0]],
            ),
        ]
    }

    #[test]
    fn k_tables() {
        let t = sample_trace();
        let kp = k_posterior(&t).unwrap();
        assert_eq!(kp[&2], 0.75);
        assert_eq!(kp[&1], 0.25);
        assert_eq!(mode(&kp), Some(2));
        assert!((kp.values().sum::<f64>() - 1.0).abs() < 1e-12);
        let same = vec![rec(vec![vec![3, 3]], vec![]); 4];
        assert_eq!(k_posterior(&same).unwrap()[&1], 1.0);
        assert_eq!(local_k_posterior(&same, 0).unwrap()[&1], 1.0);
        assert!(k_posterior(&[]).is_err());
    }

    #[test]
    fn single_record_curves() {
        let r = rec(vec![vec![0, 1]], vec![vec![0.5], vec![-1.0]]);
        let c = atom_curves(std::slice::from_ref(&r)).unwrap();
        assert_eq!(
            c.curves[0],
            Curve {
                mean: vec![0.5],
                q05: vec![0.5],
                q95: vec![0.5],
                sd: vec![0.0]
            }
        );
        assert_eq!(c.curves[1].mean, vec![-1.0]);
    }

    #[test]
    fn curves_align_swapped_labels() {
        let c = atom_curves(&sample_trace()).unwrap();
        assert_eq!(c.k, 2);
        assert_eq!(c.used, 3);
        assert_eq!(c.unaligned, 0);
        // cluster 0 holds observation (0,0) in every record
        assert!((c.curves[0].mean[0] - (0.0 + 0.2 - 0.2) / 3.0).abs() < 1e-12);
        assert!((c.curves[1].mean[1] - (1.1 + 1.3 + 1.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert!((quantile(&v, 0.05) - 1.2).abs() < 1e-12);
        assert!((quantile(&v, 0.95) - 4.8).abs() < 1e-12);
    }

    #[test]
    fn coclustering_basics() {
        let t = sample_trace();
        let streams = vec![vec![10, 20, 30], vec![30, 10]];
        assert!(matches!(
            coclustering(&t, None, 0..=1),
            Err(Error::Unsupported(_))
        ));
        let cc = coclustering(&t, Some(&streams), 0..=1).unwrap();
        assert_eq!(cc.streams, vec![10, 20, 30]);
        for a in 0..3 {
            assert_eq!(cc.matrix[a][a], 1.0);
            for b in 0..3 {
                assert!((cc.matrix[a][b] - cc.matrix[b][a]).abs() < 1e-12);
            }
        }
        // streams 10 and 20 only meet at slot 0: labels agree in records 0, 1 and 2
        assert!((cc.matrix[0][1] - 0.75).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn summaries_ignore_relabeling(seed in 0u64..1000) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let t = sample_trace();
            let permuted: Vec<TraceRecord> = t.iter().map(|r| {
                let mut perm: Vec<usize> = (0..r.atoms.len()).collect();
                perm.shuffle(&mut rng);
                relabel(r, &perm)
            }).collect();
            prop_assert_eq!(k_posterior(&t).unwrap(), k_posterior(&permuted).unwrap());
            prop_assert_eq!(local_k_posterior(&t, 1).unwrap(), local_k_posterior(&permuted, 1).unwrap());
            let streams = vec![vec![10, 20, 30], vec![30, 10]];
            prop_assert_eq!(coclustering(&t, Some(&streams), 0..=1).unwrap(), coclustering(&permuted, Some(&streams), 0..=1).unwrap());
            let (a, b) = (atom_curves(&t).unwrap(), atom_curves(&permuted).unwrap());
            for (x, y) in a.curves.iter().zip(&b.curves) {
                for u in 0..2 {
                    prop_assert!((x.mean[u] - y.mean[u]).abs() < 1e-12);
                    prop_assert!((x.q05[u] - y.q05[u]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn coclustering_follows_stream_permutation(seed in 0u64..1000) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let t = sample_trace();
            let mut ids = vec![10u64, 20, 30];
            ids.shuffle(&mut rng);
            let map = |x: u64| ids[(x / 10 - 1) as usize];
            let streams = vec![vec![10, 20, 30], vec![30, 10]];
            let renamed: Vec<Vec<u64>> = streams.iter().map(|g| g.iter().map(|&x| map(x)).collect()).collect();
            let a = coclustering(&t, Some(&streams), 0..=1).unwrap();
            let b = coclustering(&t, Some(&renamed), 0..=1).unwrap();
            for (i, &x) in a.streams.iter().enumerate() {
                for (j, &y) in a.streams.iter().enumerate() {
                    let bi = b.streams.iter().position(|&s| s == map(x)).unwrap();
                    let bj = b.streams.iter().position(|&s| s == map(y)).unwrap();
                    prop_assert_eq!(a.matrix[i][j], b.matrix[bi][bj]);
                }
            }
        }
    }
}
