//! Per-run rows and summaries; `summary.json` is a pure function of the rows.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentKind;
use crate::error::{Error, Result};
use crate::numerics::{iqr, least_squares_slope, mean, median, sample_std};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Value columns of each experiment, after `n, seed_index, seed`.
pub fn columns(kind: ExperimentKind) -> &'static [&'static str] {
    match kind {
        ExperimentKind::GammaSweep => {
            &["delta", "gf", "reference", "abs_error", "tl1", "label_mismatch", "sup_displacement"]
        }
        ExperimentKind::TransportScaling => &["sup_displacement", "cell_diameter", "normalized"],
        ExperimentKind::MeanIdentity => &["delta", "gf", "reference"],
        ExperimentKind::MinimizerStudy => &[
            "delta",
            "initial_energy",
            "initial_gf",
            "best_energy",
            "best_gf",
            "best_wasserstein",
            "reference",
            "companion_binarity",
        ],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub n: usize,
    pub seed_index: usize,
    pub seed: u64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub median: f64,
    pub iqr: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NSummary {
    pub n: usize,
    pub count: usize,
    pub columns: BTreeMap<String, ColumnStats>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub per_n: Vec<NSummary>,
    pub fits: BTreeMap<String, f64>,
    pub checks: BTreeMap<String, bool>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub kind: ExperimentKind,
    pub rows: Vec<ReportRow>,
    pub summary: Summary,
    /// Wall-clock seconds per row, kept out of `rows.csv`.
    pub runtimes: Vec<f64>,
}

impl ConvergenceReport {
    pub fn new(kind: ExperimentKind, rows: Vec<ReportRow>, runtimes: Vec<f64>) -> Self {
        let summary = summarize(kind, &rows);
        Self { kind, rows, summary, runtimes }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        columns(self.kind).iter().position(|c| *c == name)
    }

    /// Values of a column at sample size `n`, in seed order.
    pub fn values_at(&self, name: &str, n: usize) -> Vec<f64> {
        let Some(k) = self.column(name) else { return Vec::new() };
        self.rows.iter().filter(|r| r.n == n).map(|r| r.values[k]).collect()
    }

    pub fn write_rows_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows_csv(self.kind, &self.rows, writer)
    }

    /// Writes `rows.csv`, `summary.json` and `runtimes.csv` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_rows_csv(std::fs::File::create(dir.join("rows.csv"))?)?;
        let mut f = std::fs::File::create(dir.join("summary.json"))?;
        serde_json::to_writer_pretty(&mut f, &self.summary)?;
        f.write_all(b"\n")?;
        let mut w = csv::Writer::from_writer(std::fs::File::create(dir.join("runtimes.csv"))?);
        w.write_record(["n", "seed_index", "seconds"])?;
        for (r, t) in self.rows.iter().zip(&self.runtimes) {
            w.write_record([r.n.to_string(), r.seed_index.to_string(), format!("{t:.6}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn write_rows_csv<W: Write>(kind: ExperimentKind, rows: &[ReportRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["schema_version", "n", "seed_index", "seed"];
    header.extend(columns(kind));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![REPORT_SCHEMA_VERSION.to_string(), r.n.to_string(), r.seed_index.to_string(), r.seed.to_string()];
        rec.extend(r.values.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: Read>(kind: ExperimentKind, reader: R) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let width = 4 + columns(kind).len();
    let bad = |msg: String| Error::InvalidArgument(format!("rows.csv: {msg}"));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != width {
            return Err(bad(format!("expected {width} fields, found {}", rec.len())));
        }
        if rec[0].parse::<u32>().ok() != Some(REPORT_SCHEMA_VERSION) {
            return Err(bad(format!("unsupported schema_version {:?}", &rec[0])));
        }
        let int = |i: usize| rec[i].parse::<u64>().map_err(|_| bad(format!("bad integer {:?}", &rec[i])));
        let values = (4..width)
            .map(|i| rec[i].parse::<f64>().map_err(|_| bad(format!("bad number {:?}", &rec[i]))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(ReportRow { n: int(1)? as usize, seed_index: int(2)? as usize, seed: int(3)?, values });
    }
    Ok(rows)
}

fn finite(values: impl Iterator<Item = f64>) -> Vec<f64> {
    values.filter(|v| v.is_finite()).collect()
}

fn stats(values: &[f64]) -> Option<ColumnStats> {
    if values.is_empty() {
        return None;
    }
    Some(ColumnStats { median: median(values), iqr: iqr(values), mean: mean(values) })
}

/// Least-squares slope of `log y` against `log n`, skipping the smallest `n`.
fn loglog_slope(points: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .skip(1)
        .filter(|(_, y)| *y > 0.0 && y.is_finite())
        .map(|&(n, y)| ((n as f64).ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Some(least_squares_slope(&xs, &ys))
}

/// Recomputes the summary from rows alone.
pub fn summarize(kind: ExperimentKind, rows: &[ReportRow]) -> Summary {
    let cols = columns(kind);
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut per_n = Vec::with_capacity(ns.len());
    for &n in &ns {
        let group: Vec<&ReportRow> = rows.iter().filter(|r| r.n == n).collect();
        let mut columns = BTreeMap::new();
        for (k, name) in cols.iter().enumerate() {
            if let Some(s) = stats(&finite(group.iter().map(|r| r.values[k]))) {
                columns.insert(name.to_string(), s);
            }
        }
        let mut extra = BTreeMap::new();
        if kind == ExperimentKind::MeanIdentity {
            let gf: Vec<f64> = group.iter().map(|r| r.values[1]).collect();
            let reference = group[0].values[2];
            let sem = if gf.len() > 1 { sample_std(&gf) / (gf.len() as f64).sqrt() } else { f64::NAN };
            let m = mean(&gf);
            extra.insert("mean_gf".into(), m);
            extra.insert("standard_error".into(), sem);
            extra.insert("z".into(), (m - reference) / sem);
        }
        per_n.push(NSummary { n, count: group.len(), columns, extra });
    }

    let series = |name: &str| -> Vec<(usize, f64)> {
        per_n.iter().filter_map(|s| s.columns.get(name).map(|c| (s.n, c.median))).collect()
    };
    let mut fits = BTreeMap::new();
    let mut checks = BTreeMap::new();
    match kind {
        ExperimentKind::GammaSweep => {
            for name in ["abs_error", "tl1", "label_mismatch"] {
                if let Some(s) = loglog_slope(&series(name)) {
                    fits.insert(format!("{name}_slope"), s);
                }
            }
            // Median error non-increasing after the first point, up to one IQR.
            let err: Vec<(f64, f64)> =
                per_n.iter().filter_map(|s| s.columns.get("abs_error").map(|c| (c.median, c.iqr))).collect();
            let monotone = err.windows(2).skip(1).all(|w| w[1].0 <= w[0].0 + w[1].1);
            checks.insert("abs_error_non_increasing".into(), monotone);
        }
        ExperimentKind::TransportScaling => {
            if let Some(s) = loglog_slope(&series("sup_displacement")) {
                fits.insert("displacement_slope".into(), s);
            }
            if let Some(s) = loglog_slope(&series("normalized")) {
                fits.insert("normalized_slope".into(), s);
            }
        }
        ExperimentKind::MeanIdentity => {
            let zmax = per_n.iter().filter_map(|s| s.extra.get("z")).fold(0.0f64, |a, z| a.max(z.abs()));
            if !per_n.is_empty() {
                fits.insert("max_abs_z".into(), zmax);
                checks.insert("within_three_standard_errors".into(), zmax <= 3.0);
            }
        }
        ExperimentKind::MinimizerStudy => {
            if let Some(last) = per_n.last() {
                if let (Some(b), Some(i)) = (last.columns.get("best_gf"), last.columns.get("initial_gf")) {
                    fits.insert("gf_reduction_at_largest_n".into(), b.median / i.median);
                }
            }
        }
    }
    Summary { schema_version: REPORT_SCHEMA_VERSION, kind, per_n, fits, checks }
}
