//! Dataset and grid files.
//!
//! Data: header `group,value[,stream]`, one observation per row, `group`
//! being a slot index of the grid file. Grid: header `slot,coord_1..coord_r`.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{CovariateGrid, GroupedDataset};

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse<T: std::str::FromStr>(s: &str, what: &str, line: usize) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Data(format!("line {line}: cannot parse {what} from {s:?}")))
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn read_grid(path: &Path) -> Result<CovariateGrid> {
    let mut rdr = open(path)?;
    let head = rdr.headers()?.clone();
    if head.get(0).map(str::trim) != Some("slot") || head.len() < 2 {
        return Err(Error::Data(format!(
            "{}: grid header must be slot,coord_1,..",
            path.display()
        )));
    }
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let slot = parse(&rec[0], "slot", line)?;
        let coords = (1..rec.len())
            .map(|j| parse(&rec[j], "coordinate", line))
            .collect::<Result<Vec<f64>>>()?;
        rows.push((slot, coords));
    }
    rows.sort_by_key(|r| r.0);
    if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
        return Err(Error::Data(format!(
            "{}: slots must be 0..M-1, each listed once",
            path.display()
        )));
    }
    CovariateGrid::new(rows.into_iter().map(|r| r.1).collect())
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn write_grid(path: &Path, grid: &CovariateGrid) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["slot".to_string()];
    head.extend((1..=grid.dim()).map(|j| format!("coord_{j}")));
    w.write_record(&head)?;
    for u in 0..grid.len() {
        let mut row = vec![u.to_string()];
        row.extend(grid.point(u).iter().map(|&x| fmt(x)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Read observations into `n_groups` groups, keeping file order within each.
pub fn read_data(path: &Path, n_groups: usize) -> Result<GroupedDataset> {
    let mut rdr = open(path)?;
    let head: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let with_streams = match head.as_slice() {
        [g, v] if g == "group" && v == "value" => false,
        [g, v, s] if g == "group" && v == "value" && s == "stream" => true,
        _ => {
            return Err(Error::Data(format!(
                "{}: data header must be group,value[,stream]",
                path.display()
            )))
        }
    };
    let mut groups = vec![Vec::new(); n_groups];
    let mut streams = vec![Vec::new(); n_groups];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let u: usize = parse(&rec[0], "group", line)?;
        if u >= n_groups {
            return Err(Error::Data(format!(
                "line {line}: group {u} is not a slot of the {n_groups}-slot grid"
            )));
        }
        let y: f64 = parse(&rec[1], "value", line)?;
        if !y.is_finite() {
            return Err(Error::Data(format!("line {line}: value must be finite")));
        }
        groups[u].push(y);
        if with_streams {
            streams[u].push(parse(&rec[2], "stream", line)?);
        }
    }
    GroupedDataset::with_streams(groups, with_streams.then_some(streams))
}

pub fn write_data(path: &Path, data: &GroupedDataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let streams = data.streams();
    if streams.is_some() {
        w.write_record(["group", "value", "stream"])?;
    } else {
        w.write_record(["group", "value"])?;
    }
    for (u, g) in data.groups().iter().enumerate() {
        for (i, &y) in g.iter().enumerate() {
            match streams {
                Some(s) => w.write_record([u.to_string(), fmt(y), s[u][i].to_string()])?,
                None => w.write_record([u.to_string(), fmt(y)])?,
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
