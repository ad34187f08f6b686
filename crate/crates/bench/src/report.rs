//! Collects run summaries under a directory into one table.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{io_err, json_err, Result};
use crate::run::{RunSummary, SUMMARY_FILE};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub run: String,
    pub scenario: String,
    pub mode: String,
    pub graph: String,
    pub seed: u64,
    pub eps: f64,
    pub converged: bool,
    pub iterations: usize,
    pub comm_rounds: usize,
    pub primal_objective: f64,
    pub primal_feas_residual: f64,
    pub final_dist_to_ref: Option<f64>,
}

/// Every `summary.json` below `dir`, sorted by path.
pub fn find_summaries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e
                .path()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| dir.to_path_buf());
            crate::error::BenchError::Io {
                path,
                source: e.into(),
            }
        })?;
        if entry.file_type().is_file() && entry.file_name() == SUMMARY_FILE {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

pub fn collect(dir: &Path) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for path in find_summaries(dir)? {
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let s: RunSummary = serde_json::from_str(&text).map_err(json_err(&path))?;
        let run = path
            .parent()
            .and_then(|p| p.strip_prefix(dir).ok())
            .map(|p| p.display().to_string())
            .filter(|p| !p.is_empty())
            .unwrap_or_else(|| ".".into());
        rows.push(ReportRow {
            run,
            scenario: s.scenario.to_string(),
            mode: format!("{:?}", s.mode).to_lowercase(),
            graph: s.graph,
            seed: s.seed,
            eps: s.eps,
            converged: s.converged,
            iterations: s.iterations,
            comm_rounds: s.comm_rounds,
            primal_objective: s.primal_objective,
            primal_feas_residual: s.primal_feas_residual,
            final_dist_to_ref: s.final_dist_to_ref,
        });
    }
    Ok(rows)
}

pub fn write_csv(rows: &[ReportRow], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err("report"))?;
    Ok(())
}
