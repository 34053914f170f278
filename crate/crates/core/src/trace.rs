//! Per-sweep sampler output and its CSV layout.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Snapshot of a chain after one sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub sweep: usize,
    pub k: usize,
    pub gamma: f64,
    pub alpha: Vec<f64>,
    pub sigma2: f64,
    /// Component label per observation, `[u][i]`.
    pub z: Vec<Vec<usize>>,
    /// One atom per component, each of length M.
    pub atoms: Vec<Vec<f64>>,
}

/// File names of one chain's trace inside a run directory.
pub fn chain_files(chain: usize) -> [String; 3] {
    [
        format!("chain{chain}_scalars.csv"),
        format!("chain{chain}_z.csv"),
        format!("chain{chain}_atoms.csv"),
    ]
}

/// Write a chain as three CSVs: scalars (`sweep,k,gamma,sigma2,alpha_0..`),
/// labels (`sweep,z_0..`, observations in group-major order) and atoms in
/// long form (`sweep,component,slot,value`).
pub fn write_chain(dir: &Path, chain: usize, records: &[TraceRecord]) -> Result<()> {
    let [scalars, labels, atoms] = chain_files(chain);
    let mut ws = csv::Writer::from_path(dir.join(scalars))?;
    let mut wz = csv::Writer::from_path(dir.join(labels))?;
    let mut wa = csv::Writer::from_path(dir.join(atoms))?;
    let m = records.first().map_or(0, |r| r.alpha.len());
    let n: usize = records
        .first()
        .map_or(0, |r| r.z.iter().map(Vec::len).sum());
    let mut head = vec![
        "sweep".to_string(),
        "k".into(),
        "gamma".into(),
        "sigma2".into(),
    ];
    head.extend((0..m).map(|u| format!("alpha_{u}")));
    ws.write_record(&head)?;
    let mut head = vec!["sweep".to_string()];
    head.extend((0..n).map(|i| format!("z_{i}")));
    wz.write_record(&head)?;
    wa.write_record(["sweep", "component", "slot", "value"])?;
    for r in records {
        let mut row = vec![
            r.sweep.to_string(),
            r.k.to_string(),
            fmt(r.gamma),
            fmt(r.sigma2),
        ];
        row.extend(r.alpha.iter().map(|&a| fmt(a)));
        ws.write_record(&row)?;
        let mut row = vec![r.sweep.to_string()];
        row.extend(r.z.iter().flatten().map(usize::to_string));
        wz.write_record(&row)?;
        for (k, atom) in r.atoms.iter().enumerate() {
            for (u, &x) in atom.iter().enumerate() {
                wa.write_record([r.sweep.to_string(), k.to_string(), u.to_string(), fmt(x)])?;
            }
        }
    }
    ws.flush()?;
    wz.flush()?;
    wa.flush()?;
    Ok(())
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, what: &str) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Data(format!("bad or missing {what} in trace row {rec:?}")))
}

/// Read a chain written by [`write_chain`]; `group_sizes` restores the
/// per-group shape of the labels.
pub fn read_chain(dir: &Path, chain: usize, group_sizes: &[usize]) -> Result<Vec<TraceRecord>> {
    let [scalars, labels, atoms] = chain_files(chain);
    let m = group_sizes.len();
    let n: usize = group_sizes.iter().sum();
    let mut records = Vec::new();
    for row in csv::Reader::from_path(dir.join(scalars))?.records() {
        let row = row?;
        if row.len() != 4 + m {
            return Err(Error::Data(format!(
                "scalar trace row has {} fields, expected {}",
                row.len(),
                4 + m
            )));
        }
        records.push(TraceRecord {
            sweep: field(&row, 0, "sweep")?,
            k: field(&row, 1, "k")?,
            gamma: field(&row, 2, "gamma")?,
            sigma2: field(&row, 3, "sigma2")?,
            alpha: (0..m)
                .map(|u| field(&row, 4 + u, "alpha"))
                .collect::<Result<_>>()?,
            z: Vec::new(),
            atoms: Vec::new(),
        });
    }
    let mut rows = csv::Reader::from_path(dir.join(labels))?.into_records();
    for r in records.iter_mut() {
        let row = rows
            .next()
            .ok_or_else(|| Error::Data("label trace is shorter than scalar trace".into()))??;
        if row.len() != 1 + n || field::<usize>(&row, 0, "sweep")? != r.sweep {
            return Err(Error::Data(format!(
                "label trace row for sweep {} is malformed",
                r.sweep
            )));
        }
        let flat: Vec<usize> = (0..n)
            .map(|i| field(&row, 1 + i, "label"))
            .collect::<Result<_>>()?;
        let mut it = flat.into_iter();
        r.z = group_sizes
            .iter()
            .map(|&g| it.by_ref().take(g).collect())
            .collect();
    }
    if rows.next().is_some() {
        return Err(Error::Data(
            "label trace is longer than scalar trace".into(),
        ));
    }
    let index: std::collections::HashMap<usize, usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.sweep, i))
        .collect();
    for row in csv::Reader::from_path(dir.join(atoms))?.records() {
        let row = row?;
        let sweep: usize = field(&row, 0, "sweep")?;
        let k: usize = field(&row, 1, "component")?;
        let u: usize = field(&row, 2, "slot")?;
        let x: f64 = field(&row, 3, "value")?;
        let &i = index
            .get(&sweep)
            .ok_or_else(|| Error::Data(format!("atom row for unknown sweep {sweep}")))?;
        let atoms = &mut records[i].atoms;
        if k > atoms.len() || u >= m {
            return Err(Error::Data(format!(
                "atom row ({sweep}, {k}, {u}) out of order"
            )));
        }
        if k == atoms.len() {
            atoms.push(Vec::with_capacity(m));
        }
        if atoms[k].len() != u {
            return Err(Error::Data(format!(
                "atom row ({sweep}, {k}, {u}) out of order"
            )));
        }
        atoms[k].push(x);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![
            TraceRecord {
                sweep: 3,
                k: 2,
                gamma: 0.1 + 0.2,
                alpha: vec![1.0 / 3.0, 2.5],
                sigma2: 1e-300,
                z: vec![vec![0, 1, 1], vec![1]],
                atoms: vec![vec![-0.5, std::f64::consts::PI], vec![1e10, -1e-10]],
            },
            TraceRecord {
                sweep: 8,
                k: 1,
                gamma: 2.0,
                alpha: vec![0.7, 0.7],
                sigma2: 0.25,
                z: vec![vec![0, 0, 0], vec![0]],
                atoms: vec![vec![0.0, -0.0]],
            },
        ];
        write_chain(dir.path(), 2, &records).unwrap();
        let back = read_chain(dir.path(), 2, &[3, 1]).unwrap();
        assert_eq!(back, records);
        assert!(read_chain(dir.path(), 2, &[2, 1]).is_err());
    }
}
