//! CSV, JSON and SVG artifacts.
//!
//! Per-job layout under an output directory:
//!
//! ```text
//! stage1.csv                    original and processed data-level metrics
//! sweep_<arm>_<split>.csv       one row per threshold
//! sweep_<arm>.svg               test-split sweep, five panels
//! summary.json                  every report at full precision
//! ```

pub mod svg;
pub mod table;

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{Arm, BenchReport, StageOneReport, SweepRecord};

pub use svg::{render_sweep_records, render_sweep_svg};
pub use table::{format_value, MetricRow, MetricTable, ORIGINAL_LABEL, STAGE1_HEADER, UNDEFINED};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

pub const SWEEP_HEADER: [&str; 12] = [
    "threshold",
    "balanced_accuracy",
    "statistical_parity_difference",
    "disparate_impact",
    "equal_opportunity_difference",
    "average_odds_difference",
    "theil_index",
    "tpr_unprivileged",
    "tpr_privileged",
    "fpr_unprivileged",
    "fpr_privileged",
    "selected",
];

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Dataset(format!("{}: {other:?}", path.display())),
    }
}

/// Sweep rows; `selected` is 1 on the row at `optimal`.
pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], optimal: Option<f64>, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in records {
        w.write_record([
            format!("{:.2}", r.threshold),
            format_value(&r.balanced_accuracy),
            format_value(&r.statistical_parity_difference),
            format_value(&r.disparate_impact),
            format_value(&r.equal_opportunity_difference),
            format_value(&r.average_odds_difference),
            format_value(&r.theil_index),
            format_value(&r.unprivileged.tpr),
            format_value(&r.privileged.tpr),
            format_value(&r.unprivileged.fpr),
            format_value(&r.privileged.fpr),
            u8::from(optimal == Some(r.threshold)).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Everything a job produced, at full precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub job_id: Option<String>,
    pub stage1: StageOneReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchReport>,
}

impl Summary {
    pub fn new(job_id: Option<String>, stage1: StageOneReport, bench: Option<BenchReport>) -> Self {
        Self {
            schema_version: SUMMARY_SCHEMA_VERSION,
            job_id,
            stage1,
            bench,
        }
    }
}

/// Shortest round-trip float formatting, so parsing returns equal values.
pub fn write_summary_json(path: &Path, summary: &Summary) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_summary_json(path: &Path) -> Result<Summary> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let summary: Summary = serde_json::from_str(&text)
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    if summary.schema_version != SUMMARY_SCHEMA_VERSION {
        return Err(Error::Dataset(format!(
            "{}: schema_version {} is not supported (expected {SUMMARY_SCHEMA_VERSION})",
            path.display(),
            summary.schema_version
        )));
    }
    Ok(summary)
}

pub fn write_stage1_csv(path: &Path, reports: &[StageOneReport]) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::Dataset("no stage-one reports to write".into()));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    MetricTable::with_original(reports).write_csv(std::io::BufWriter::new(file))
}

/// Writes the per-job layout into `dir` and returns the paths written.
pub fn write_job_artifacts(dir: &Path, summary: &Summary) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let stage1 = dir.join("stage1.csv");
    write_stage1_csv(&stage1, std::slice::from_ref(&summary.stage1))?;
    written.push(stage1);

    if let Some(bench) = &summary.bench {
        for arm in Arm::ALL {
            let Some(result) = bench.arm(arm).result() else {
                continue;
            };
            for (split, records) in [("validation", &result.validation), ("test", &result.test)] {
                let path = dir.join(format!("sweep_{}_{split}.csv", arm.name()));
                let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                write_sweep_csv(records, Some(result.optimal_threshold), std::io::BufWriter::new(file))
                    .map_err(|e| csv_error(&path, e))?;
                written.push(path);
            }
            let path = dir.join(format!("sweep_{}.svg", arm.name()));
            let label = format!(
                "{}:{} {} {} arm",
                bench.dataset,
                bench.attribute,
                bench.method.method(),
                arm.name()
            );
            std::fs::write(&path, render_sweep_svg(result, &label)).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }

    let path = dir.join("summary.json");
    write_summary_json(&path, summary)?;
    written.push(path);
    Ok(written)
}
