//! CSV emission shared by the CLI and the acceptance harness.
//!
//! Every file starts with a `# ` comment line recording the resolved
//! configuration, so a result file is self-describing. All values are
//! written with Rust's shortest round-trip float formatting; identical
//! inputs therefore produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::panel::ForecastPanel;
use crate::simlab::{SimRow, SimSummary};
use crate::spf::{EvalRecord, PathResult};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn wrap(path: &Path) -> impl Fn(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.display().to_string(), source }
}

/// `inf`-safe shortest round-trip formatting.
pub fn fmt_float(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".to_string()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{x}")
    }
}

/// Writes a commented CSV: the comment line, a header row, then data rows.
pub fn write_csv<I>(
    path: &Path,
    comment: &str,
    header: &[&str],
    rows: I,
) -> Result<(), ReportError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let e = wrap(path);
    let mut out = BufWriter::new(File::create(path).map_err(&e)?);
    writeln!(out, "# {comment}").map_err(&e)?;
    writeln!(out, "{}", header.join(",")).map_err(&e)?;
    for row in rows {
        writeln!(out, "{}", row.join(",")).map_err(&e)?;
    }
    out.flush().map_err(&e)
}

pub fn write_sim_rows(path: &Path, comment: &str, rows: &[SimRow]) -> Result<(), ReportError> {
    write_csv(
        path,
        comment,
        &["scheme", "mode", "alpha", "m", "replication", "metric"],
        rows.iter().map(|r| {
            vec![
                r.scheme.name().to_string(),
                r.mode.name().to_string(),
                fmt_float(r.alpha),
                r.m.to_string(),
                r.replication.to_string(),
                fmt_float(r.metric),
            ]
        }),
    )
}

pub fn write_sim_summary(
    path: &Path,
    comment: &str,
    summary: &[SimSummary],
) -> Result<(), ReportError> {
    write_csv(
        path,
        comment,
        &["scheme", "mode", "alpha", "m", "mean", "std_error", "n", "failures"],
        summary.iter().map(|s| {
            vec![
                s.scheme.name().to_string(),
                s.mode.name().to_string(),
                fmt_float(s.alpha),
                s.m.to_string(),
                fmt_float(s.mean),
                fmt_float(s.std_error),
                s.n.to_string(),
                s.failures.to_string(),
            ]
        }),
    )
}

/// Per-record evaluation output, ordered by (task, origin, gamma).
pub fn write_eval_records(
    path: &Path,
    comment: &str,
    panel: &ForecastPanel,
    scheme: &str,
    mode: &str,
    grouping: &str,
    lambda: f64,
    records: &[EvalRecord],
) -> Result<(), ReportError> {
    write_csv(
        path,
        comment,
        &[
            "task", "grouping", "mode", "scheme", "gamma", "lambda", "origin", "forecast",
            "actual", "sq_error",
        ],
        records.iter().map(|r| {
            vec![
                panel.tasks()[r.task].clone(),
                grouping.to_string(),
                mode.to_string(),
                scheme.to_string(),
                fmt_float(r.gamma),
                fmt_float(lambda),
                panel.periods()[r.origin].clone(),
                fmt_float(r.forecast),
                fmt_float(r.actual),
                fmt_float(r.sq_error),
            ]
        }),
    )
}

/// Globalisation-path output: one row per (task, gamma).
pub fn write_path_result(
    path: &Path,
    comment: &str,
    tasks: &[String],
    grouping: &str,
    result: &PathResult,
) -> Result<(), ReportError> {
    let mut rows = Vec::new();
    for (k, task) in tasks.iter().enumerate() {
        for (i, &gamma) in result.gammas.iter().enumerate() {
            rows.push(vec![
                task.clone(),
                grouping.to_string(),
                fmt_float(gamma),
                fmt_float(result.ratios[k][i]),
            ]);
        }
    }
    write_csv(path, comment, &["task", "grouping", "gamma", "msfe_rel_local"], rows)
}

/// Fitted weights, one row per (task, forecaster).
pub fn write_weights(
    path: &Path,
    comment: &str,
    panel: &ForecastPanel,
    per_task: &[nalgebra::DVector<f64>],
) -> Result<(), ReportError> {
    let mut rows = Vec::new();
    for (k, task) in panel.tasks().iter().enumerate() {
        for (j, forecaster) in panel.forecasters().iter().enumerate() {
            rows.push(vec![task.clone(), forecaster.clone(), fmt_float(per_task[k][j])]);
        }
    }
    write_csv(path, comment, &["task", "forecaster", "weight"], rows)
}

/// One summary line per configuration: per-task relative-MSFE mean with the
/// min and max across tasks.
#[derive(Debug, Clone)]
pub struct EvalSummaryRow {
    pub scheme: String,
    pub mode: String,
    pub grouping: String,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

pub fn write_eval_summary(
    path: &Path,
    comment: &str,
    rows: &[EvalSummaryRow],
) -> Result<(), ReportError> {
    write_csv(
        path,
        comment,
        &["scheme", "mode", "grouping", "mean", "min", "max"],
        rows.iter().map(|r| {
            vec![
                r.scheme.clone(),
                r.mode.clone(),
                r.grouping.clone(),
                fmt_float(r.mean),
                fmt_float(r.min),
                fmt_float(r.max),
            ]
        }),
    )
}
