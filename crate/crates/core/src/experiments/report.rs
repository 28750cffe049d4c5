use std::fs;
use std::path::Path;

use serde::Serialize;

use super::config::Method;
use super::run::{aggregate, AggregateRow, ExperimentReport, ReportRow, StageTiming, TrialError};
use crate::error::{Error, Result};

pub const ROWS_FILE: &str = "rows.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.csv";

const ROWS_HEADER: [&str; 9] = [
    "method",
    "budget",
    "trial",
    "total_fraction",
    "frac_A",
    "frac_B",
    "disparity",
    "stderr_total",
    "runtime_s",
];

const AGGREGATE_HEADER: [&str; 11] = [
    "method",
    "budget",
    "trials",
    "mean_total_fraction",
    "se_total_fraction",
    "mean_frac_A",
    "se_frac_A",
    "mean_frac_B",
    "se_frac_B",
    "mean_disparity",
    "se_disparity",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_hash: &'a str,
    code_version: &'a str,
    master_seed: u64,
    trial_seeds: &'a [u64],
    attribute: Option<&'a str>,
    /// Influenced fractions include the seed nodes themselves.
    seeds_counted_as_influenced: bool,
    rows: usize,
    files: Vec<&'static str>,
    errors: &'a [TrialError],
    config: &'a super::ExperimentConfig,
}

/// Writes `rows.csv`, `aggregate.csv` and `manifest.json` (plus
/// `timings.csv` when runtimes were recorded) into `out_dir`.
pub fn emit_report(report: &ExperimentReport, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_rows(&report.rows, &out_dir.join(ROWS_FILE))?;
    write_aggregate(&report.aggregates, &out_dir.join(AGGREGATE_FILE))?;
    let mut files = vec![ROWS_FILE, AGGREGATE_FILE];
    if report.config.record_runtime {
        write_timings(
            &report.timings,
            report.wall_time_s,
            &out_dir.join(TIMINGS_FILE),
        )?;
        files.push(TIMINGS_FILE);
    }
    let manifest = Manifest {
        config_hash: &report.provenance.config_hash,
        code_version: &report.provenance.code_version,
        master_seed: report.provenance.master_seed,
        trial_seeds: &report.provenance.trial_seeds,
        attribute: report.attribute.as_deref(),
        seeds_counted_as_influenced: true,
        rows: report.rows.len(),
        files,
        errors: &report.errors,
        config: &report.config,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn write_rows(rows: &[ReportRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ROWS_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.as_str().to_string(),
            r.budget.to_string(),
            r.trial.to_string(),
            r.total_fraction.to_string(),
            cell(r.frac_a),
            cell(r.frac_b),
            cell(r.disparity),
            r.stderr_total.to_string(),
            cell(r.runtime_s),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_aggregate(rows: &[AggregateRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(AGGREGATE_HEADER)?;
    for a in rows {
        w.write_record([
            a.method.as_str().to_string(),
            a.budget.to_string(),
            a.trials.to_string(),
            a.mean_total_fraction.to_string(),
            cell(a.se_total_fraction),
            cell(a.mean_frac_a),
            cell(a.se_frac_a),
            cell(a.mean_frac_b),
            cell(a.se_frac_b),
            cell(a.mean_disparity),
            cell(a.se_disparity),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_timings(timings: &[StageTiming], wall: f64, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["trial", "stage", "seconds"])?;
    for t in timings {
        w.write_record([t.trial.to_string(), t.stage.clone(), t.seconds.to_string()])?;
    }
    w.write_record(["", "wall_total", &wall.to_string()])?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses a `rows.csv` written by [`emit_report`].
pub fn read_rows(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != ROWS_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected header {}", ROWS_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let err = |col: &str, v: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("bad {col} value {v:?}"),
        };
        let num = |j: usize| -> Result<f64> {
            let v = rec.get(j).unwrap_or("");
            v.parse().map_err(|_| err(ROWS_HEADER[j], v))
        };
        let opt = |j: usize| -> Result<Option<f64>> {
            let v = rec.get(j).unwrap_or("");
            if v.is_empty() {
                Ok(None)
            } else {
                v.parse().map(Some).map_err(|_| err(ROWS_HEADER[j], v))
            }
        };
        let int = |j: usize| -> Result<usize> {
            let v = rec.get(j).unwrap_or("");
            v.parse().map_err(|_| err(ROWS_HEADER[j], v))
        };
        rows.push(ReportRow {
            method: Method::parse(rec.get(0).unwrap_or(""))
                .map_err(|_| err("method", rec.get(0).unwrap_or("")))?,
            budget: int(1)?,
            trial: int(2)?,
            total_fraction: num(3)?,
            frac_a: opt(4)?,
            frac_b: opt(5)?,
            disparity: opt(6)?,
            stderr_total: num(7)?,
            runtime_s: opt(8)?,
        });
    }
    rows.sort_by(|a, b| {
        (a.method.as_str(), a.budget, a.trial).cmp(&(b.method.as_str(), b.budget, b.trial))
    });
    Ok(rows)
}

/// Recomputes `aggregate.csv` in `dir` from its `rows.csv`.
pub fn recompute_aggregates(dir: &Path) -> Result<Vec<AggregateRow>> {
    let rows = read_rows(&dir.join(ROWS_FILE))?;
    let agg = aggregate(&rows);
    write_aggregate(&agg, &dir.join(AGGREGATE_FILE))?;
    Ok(agg)
}
