//! File formats of a run directory.
//!
//! Numbers are written with Rust's `{:e}` formatting, the shortest decimal
//! that parses back to the same `f64`, so outputs are byte-stable and
//! round-trip exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::flow::{Sample, Snapshot};
use crate::rescale::{RescaledSample, RescaledSnapshot};
use crate::sphere::{Boundary, CapGrid, Mode, ScalarField};
use crate::verify::EstimateReport;

pub const TIMESERIES: &str = "timeseries.csv";
pub const RESCALED_TIMESERIES: &str = "rescaled_timeseries.csv";
pub const REPORT: &str = "report.json";
pub const CONFIG_ECHO: &str = "config.echo";

pub const RESCALED_COLUMNS: [&str; 9] = [
    "s",
    "t",
    "utilde_min",
    "utilde_max",
    "sup_grad_phi",
    "sup_grad_utilde",
    "H_tilde_min",
    "H_tilde_max",
    "area_tilde",
];

pub fn fmt(x: f64) -> String {
    format!("{x:e}")
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Trajectory(format!("{what}: cannot parse `{s}`")))
}

fn write_table<const N: usize>(path: &Path, header: &[&str; N], rows: impl Iterator<Item = [f64; N]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|x| fmt(*x)))?;
    }
    w.flush()?;
    Ok(())
}

fn read_table<const N: usize>(path: &Path, header: &[&str; N]) -> Result<Vec<[f64; N]>> {
    let mut r = csv::Reader::from_path(path)?;
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(Error::Trajectory(format!("{}: unexpected header {found:?}", path.display())));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut row = [0.0; N];
        for (k, field) in rec.iter().enumerate() {
            row[k] = parse_f64(field, header[k])?;
        }
        out.push(row);
    }
    Ok(out)
}

pub fn write_timeseries(path: &Path, samples: &[Sample]) -> Result<()> {
    write_table(path, &Sample::COLUMNS, samples.iter().map(Sample::to_row))
}

pub fn read_timeseries(path: &Path) -> Result<Vec<Sample>> {
    Ok(read_table(path, &Sample::COLUMNS)?.iter().map(Sample::from_row).collect())
}

fn rescaled_row(s: &RescaledSample) -> [f64; 9] {
    [
        s.s,
        s.t,
        s.utilde_min,
        s.utilde_max,
        s.sup_grad_phi,
        s.sup_grad_utilde,
        s.h_tilde_min,
        s.h_tilde_max,
        s.area_tilde,
    ]
}

pub fn write_rescaled_timeseries(path: &Path, samples: &[RescaledSample]) -> Result<()> {
    write_table(path, &RESCALED_COLUMNS, samples.iter().map(rescaled_row))
}

pub fn read_rescaled_timeseries(path: &Path) -> Result<Vec<RescaledSample>> {
    Ok(read_table(path, &RESCALED_COLUMNS)?
        .iter()
        .map(|r| RescaledSample {
            s: r[0],
            t: r[1],
            utilde_min: r[2],
            utilde_max: r[3],
            sup_grad_phi: r[4],
            sup_grad_utilde: r[5],
            h_tilde_min: r[6],
            h_tilde_max: r[7],
            area_tilde: r[8],
        })
        .collect())
}

pub fn snapshot_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("snap_{index}.csv"))
}

/// Header lines `# key = value`, then a column row, then one row per node.
pub fn write_snapshot(path: &Path, grid: &CapGrid, t: f64, s: f64, field: &ScalarField, column: &str) -> Result<()> {
    field.check_grid(grid)?;
    let mut out = String::new();
    out.push_str(&format!("# n_dim = {}\n", grid.n_dim()));
    out.push_str(&format!("# theta_max = {}\n", fmt(grid.theta_max())));
    out.push_str(&format!("# mode = {}\n", grid.mode().as_str()));
    out.push_str(&format!("# t = {}\n", fmt(t)));
    out.push_str(&format!("# s = {}\n", fmt(s)));
    let full = grid.mode() == Mode::Full2d;
    out.push_str(if full { "theta,psi," } else { "theta," });
    out.push_str(column);
    out.push('\n');
    for (node, u) in grid.nodes().iter().zip(field.values()) {
        out.push_str(&fmt(node.theta));
        if full {
            out.push(',');
            out.push_str(&fmt(node.psi));
        }
        out.push(',');
        out.push_str(&fmt(*u));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// A snapshot file read back: `(t, s, values)`.
pub struct SnapshotFile {
    pub t: f64,
    pub s: f64,
    pub values: ScalarField,
}

pub fn read_snapshot(path: &Path, grid: &CapGrid) -> Result<SnapshotFile> {
    let text = fs::read_to_string(path)?;
    let bad = |why: &str| Error::Trajectory(format!("{}: {why}", path.display()));
    let (mut t, mut s) = (None, None);
    let mut values = Vec::with_capacity(grid.len());
    let mut seen_columns = false;
    for line in text.lines() {
        if let Some(meta) = line.strip_prefix('#') {
            let (k, v) = meta.split_once('=').ok_or_else(|| bad("malformed header line"))?;
            match k.trim() {
                "t" => t = Some(parse_f64(v, "t")?),
                "s" => s = Some(parse_f64(v, "s")?),
                "n_dim" if v.trim() != grid.n_dim().to_string() => return Err(bad("n_dim does not match the grid")),
                "mode" if v.trim() != grid.mode().as_str() => return Err(bad("mode does not match the grid")),
                _ => {}
            }
        } else if !seen_columns {
            seen_columns = true;
        } else if !line.is_empty() {
            let last = line.rsplit(',').next().ok_or_else(|| bad("empty row"))?;
            values.push(parse_f64(last, "u")?);
        }
    }
    if values.len() != grid.len() {
        return Err(bad(&format!("{} rows for a grid of {} nodes", values.len(), grid.len())));
    }
    Ok(SnapshotFile {
        t: t.ok_or_else(|| bad("missing t"))?,
        s: s.ok_or_else(|| bad("missing s"))?,
        values: ScalarField::new(grid, values, Boundary::Neumann)?,
    })
}

/// All `snap_<i>.csv` files of a directory in index order.
pub fn read_snapshots(dir: &Path, grid: &CapGrid) -> Result<Vec<SnapshotFile>> {
    let mut out = Vec::new();
    while snapshot_path(dir, out.len()).exists() {
        out.push(read_snapshot(&snapshot_path(dir, out.len()), grid)?);
    }
    if out.is_empty() {
        return Err(Error::Trajectory(format!("{}: no snapshot files", dir.display())));
    }
    Ok(out)
}

pub fn write_snapshots(dir: &Path, grid: &CapGrid, snaps: &[Snapshot]) -> Result<()> {
    for (i, s) in snaps.iter().enumerate() {
        write_snapshot(&snapshot_path(dir, i), grid, s.t, s.s, &s.u, "u")?;
    }
    Ok(())
}

pub fn write_rescaled_snapshots(dir: &Path, grid: &CapGrid, snaps: &[RescaledSnapshot]) -> Result<()> {
    for (i, s) in snaps.iter().enumerate() {
        write_snapshot(&snapshot_path(dir, i), grid, s.t, s.s, &s.utilde, "utilde")?;
    }
    Ok(())
}

pub fn write_report(path: &Path, report: &EstimateReport) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, report)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Run facts that are not derivable from the CSV files.
pub struct RunFacts {
    pub c: f64,
    pub termination: String,
    pub steps: usize,
}

pub fn read_run_facts(path: &Path) -> Result<RunFacts> {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let meta = &v["meta"];
    let missing = |k: &str| Error::Trajectory(format!("{}: meta.{k} missing", path.display()));
    Ok(RunFacts {
        c: meta["c"].as_f64().ok_or_else(|| missing("c"))?,
        termination: meta["termination"].as_str().ok_or_else(|| missing("termination"))?.to_string(),
        steps: meta["steps"].as_u64().ok_or_else(|| missing("steps"))? as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::Resolution;

    #[test]
    fn formatting_round_trips() {
        for x in [0.0, 1.0, -2.5e-300, std::f64::consts::PI, 1.0 / 3.0, f64::MAX, 5e-324] {
            assert_eq!(fmt(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert!(fmt(f64::NAN).parse::<f64>().unwrap().is_nan());
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = CapGrid::build(2, 1.0, Resolution::full2d(5, 8), Mode::Full2d).unwrap();
        let f = ScalarField::from_fn(&g, Boundary::Neumann, |t, p| 1.0 + 0.1 * t.cos() * p.sin() / 3.0).unwrap();
        let p = snapshot_path(dir.path(), 0);
        write_snapshot(&p, &g, 0.125, 0.1 / 3.0, &f, "u").unwrap();
        let back = read_snapshot(&p, &g).unwrap();
        assert_eq!(back.values.values(), f.values());
        assert_eq!((back.t, back.s), (0.125, 0.1 / 3.0));
        let other = CapGrid::build(2, 1.0, Resolution::axisymmetric(5), Mode::Axisymmetric).unwrap();
        assert!(read_snapshot(&p, &other).is_err());
    }

    #[test]
    fn timeseries_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<Sample> =
            (0..4).map(|k| Sample::from_row(&std::array::from_fn(|i| (i * k) as f64 / 7.0))).collect();
        let p = dir.path().join(TIMESERIES);
        write_timeseries(&p, &rows).unwrap();
        assert_eq!(read_timeseries(&p).unwrap(), rows);
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("t,s,u_min,u_max,phidot_theta_min"));
    }
}
