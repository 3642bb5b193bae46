use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::experiment::{ExperimentResult, RunOutcome};
use super::train::{median_epoch_time, EpochRecord};
use crate::error::{Error, Result};

pub const EPOCH_CSV_HEADER: [&str; 5] = [
    "epoch",
    "epoch_wall_time_s",
    "cumulative_time_s",
    "train_mse",
    "val_mse",
];

pub const SUMMARY_CSV_HEADER: [&str; 7] = [
    "features",
    "sigma",
    "variant",
    "median_epoch_time_s",
    "final_val_mse",
    "epochs_run",
    "skipped_reason",
];

/// 9 significant digits.
fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}

fn percent(sigma: f64) -> String {
    format!("{}%", (sigma * 100.0 * 1000.0).round() / 1000.0)
}

pub fn epoch_csv_name(features: usize, sigma: f64, variant: &str) -> String {
    format!("m{features}_sigma{sigma}_{variant}.csv")
}

pub fn write_epoch_csv(path: &Path, records: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(EPOCH_CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.epoch.to_string(),
            sig9(r.epoch_wall_time_s),
            sig9(r.cumulative_time_s),
            sig9(r.train_mse),
            sig9(r.val_mse),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_epoch_csv(path: &Path) -> Result<Vec<EpochRecord>> {
    let bad = |reason: String| Error::Format {
        kind: "epoch csv",
        path: path.to_path_buf(),
        reason,
    };
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(EPOCH_CSV_HEADER) {
        return Err(bad(format!("unexpected header {:?}", r.headers()?)));
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let float = |i: usize| -> Result<f64> {
            row[i]
                .parse()
                .map_err(|e| bad(format!("{:?}: {e}", &row[i])))
        };
        out.push(EpochRecord {
            epoch: row[0]
                .parse()
                .map_err(|e| bad(format!("{:?}: {e}", &row[0])))?,
            epoch_wall_time_s: float(1)?,
            cumulative_time_s: float(2)?,
            train_mse: float(3)?,
            val_mse: float(4)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub features: usize,
    pub sigma: f64,
    pub variant: String,
    pub median_epoch_time_s: Option<f64>,
    pub final_val_mse: Option<f64>,
    pub epochs_run: usize,
    pub skipped_reason: Option<String>,
}

pub fn summary_rows(results: &[ExperimentResult]) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    for res in results {
        for run in &res.runs {
            let base = SummaryRow {
                features: res.features,
                sigma: res.sigma,
                variant: run.variant.name().to_string(),
                median_epoch_time_s: None,
                final_val_mse: None,
                epochs_run: 0,
                skipped_reason: None,
            };
            rows.push(match &run.outcome {
                RunOutcome::Trained { records, .. } => SummaryRow {
                    median_epoch_time_s: Some(median_epoch_time(records)?),
                    final_val_mse: records.last().map(|r| r.val_mse),
                    epochs_run: records.len(),
                    ..base
                },
                RunOutcome::Skipped { reason } => SummaryRow {
                    skipped_reason: Some(reason.clone()),
                    ..base
                },
            });
        }
    }
    Ok(rows)
}

/// Aligned `(features, sigma)` x variant table of median epoch times,
/// `-` where a variant was skipped.
fn summary_table(results: &[ExperimentResult], rows: &[SummaryRow]) -> String {
    let mut variants: Vec<&str> = Vec::new();
    for r in rows {
        if !variants.contains(&r.variant.as_str()) {
            variants.push(&r.variant);
        }
    }
    let mut out = String::new();
    out.push_str(
        "# Median epoch time [s] per features (m_X), context ratio (sigma) and variant.\n",
    );
    out.push_str("# Epoch time covers the training pass only; validation passes are not timed.\n");
    let _ = write!(out, "{:>8} {:>8} {:>8}", "features", "sigma", "n_C");
    for v in &variants {
        let _ = write!(out, " {v:>14}");
    }
    out.push('\n');
    for res in results {
        let _ = write!(
            out,
            "{:>8} {:>8} {:>8}",
            res.features,
            percent(res.sigma),
            res.n_c
        );
        for v in &variants {
            let cell = rows
                .iter()
                .find(|r| r.features == res.features && r.sigma == res.sigma && r.variant == *v)
                .and_then(|r| r.median_epoch_time_s)
                .map_or_else(|| "-".to_string(), |t| format!("{t:.6}"));
            let _ = write!(out, " {cell:>14}");
        }
        out.push('\n');
    }
    out
}

/// Writes one epoch CSV per trained variant plus `summary.txt` and
/// `summary.csv` into `dir` (created if missing).
pub fn write_report(results: &[ExperimentResult], dir: &Path) -> Result<()> {
    if results.is_empty() {
        return Err(Error::contract("write_report: no results"));
    }
    fs::create_dir_all(dir)?;
    for res in results {
        for run in &res.runs {
            if let Some(records) = run.records() {
                write_epoch_csv(
                    &dir.join(epoch_csv_name(res.features, res.sigma, run.variant.name())),
                    records,
                )?;
            }
        }
    }
    let rows = summary_rows(results)?;
    fs::write(dir.join("summary.txt"), summary_table(results, &rows))?;

    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record(SUMMARY_CSV_HEADER)?;
    let dash = || "-".to_string();
    for r in &rows {
        w.write_record([
            r.features.to_string(),
            r.sigma.to_string(),
            r.variant.clone(),
            r.median_epoch_time_s.map_or_else(dash, sig9),
            r.final_val_mse.map_or_else(dash, sig9),
            r.epochs_run.to_string(),
            r.skipped_reason.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
