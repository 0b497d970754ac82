use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::bench::{BenchmarkReport, RunStatus, Timings};
use super::PipelineError;

fn io(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io(format!("{}: {e}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| io(path, e))
}

/// Writes `report.json` and `timings.json` into `dir`.
pub fn write_report(report: &BenchmarkReport, timings: &Timings, dir: &Path) -> Result<(), PipelineError> {
    let r = serde_json::to_vec_pretty(report).expect("report serializes");
    write(&dir.join("report.json"), &r)?;
    let t = serde_json::to_vec_pretty(timings).expect("timings serialize");
    write(&dir.join("timings.json"), &t)
}

pub fn read_report(path: &Path) -> Result<BenchmarkReport, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::CorruptFile(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub status: RunStatus,
    pub rel_error: Option<f64>,
    pub period: Option<f64>,
    pub peak: Option<f64>,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub params: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub t1: f64,
    pub models: BTreeMap<String, ModelSummary>,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub n: usize,
    pub m: usize,
    /// Selected shape parameter per operator, keyed by operator name.
    pub eps: BTreeMap<String, f64>,
    pub ident_evaluations_per_sample: Vec<usize>,
    pub points: Vec<PointSummary>,
}

/// One CSV per (test point, model) plus `summary.json`. Returns the written
/// files in order.
pub fn export_histories(report: &BenchmarkReport, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut written = Vec::new();
    let mut points = Vec::new();
    for (i, p) in report.points.iter().enumerate() {
        let mut models = BTreeMap::new();
        for run in &p.models {
            if run.is_ok() {
                let mut csv = String::from("time");
                for d in &p.monitored {
                    write!(csv, ",dof_{d}").expect("string write");
                }
                csv.push('\n');
                for (k, t) in run.time.iter().enumerate() {
                    write!(csv, "{t:e}").expect("string write");
                    for tr in &run.traces {
                        write!(csv, ",{:e}", tr[k]).expect("string write");
                    }
                    csv.push('\n');
                }
                let path = dir.join(format!("point{i}_{}.csv", run.kind.name()));
                write(&path, csv.as_bytes())?;
                written.push(path);
            }
            models.insert(
                run.kind.name().to_string(),
                ModelSummary {
                    status: run.status.clone(),
                    rel_error: run.rel_error,
                    period: run.period,
                    peak: run.peak,
                    steps: run.time.len().saturating_sub(1),
                },
            );
        }
        points.push(PointSummary { params: p.params.clone(), p_hat: p.p_hat.clone(), t1: p.t1, models });
    }
    let summary = ExportSummary {
        n: report.n,
        m: report.m,
        eps: report.eps_table.iter().map(|(op, e)| (op.name().to_string(), *e)).collect(),
        ident_evaluations_per_sample: report.ident_evaluations_per_sample.clone(),
        points,
    };
    let path = dir.join("summary.json");
    write(&path, &serde_json::to_vec_pretty(&summary).expect("summary serializes"))?;
    written.push(path);
    Ok(written)
}
