//! One experiment: instance, solve, recovery, reports.

use std::path::{Path, PathBuf};

use dualsmooth::apapc::{Execution, SolveOptions};
use dualsmooth::report::{IterRecord, StopReason};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Mode, Scenario, Schedule};
use crate::error::{io_err, json_err, BenchError, Result};
use crate::instance::{generate, Instance};
use crate::reference::{self, ReferenceSolution};
use crate::scenario::ScenarioProblem;

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const REFERENCE_FILE: &str = "reference.json";

/// The reference, minus its point vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSummary {
    pub method: reference::Method,
    pub objective: f64,
    pub dual_objective: f64,
    pub certified_tolerance: f64,
    pub feas_residual: f64,
    pub iterations: usize,
}

impl From<&ReferenceSolution> for ReferenceSummary {
    fn from(r: &ReferenceSolution) -> Self {
        ReferenceSummary {
            method: r.method,
            objective: r.objective,
            dual_objective: r.dual_objective,
            certified_tolerance: r.certified_tolerance,
            feas_residual: r.feas_residual,
            iterations: r.iterations,
        }
    }
}

/// The JSON summary of a run. No field depends on wall-clock time, so
/// reruns with the same configuration are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: Scenario,
    pub mode: Mode,
    pub schedule: Schedule,
    pub graph: String,
    pub n: usize,
    pub edges: usize,
    pub kappa_w: f64,
    pub dim: usize,
    pub lambda: f64,
    pub eps: f64,
    pub radius: f64,
    pub seed: u64,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub comm_rounds: usize,
    pub grad_evals: usize,
    pub k_applications: usize,
    pub kt_applications: usize,
    pub messages: usize,
    pub volume: usize,
    pub tau: f64,
    pub eta: f64,
    pub theta: f64,
    pub alpha: f64,
    pub final_objective: f64,
    pub final_feas_residual: f64,
    pub final_dist_to_ref: Option<f64>,
    pub best_error_bound: Option<f64>,
    pub primal_objective: f64,
    pub primal_feas_residual: f64,
    pub reference: Option<ReferenceSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub records: Vec<IterRecord>,
    /// Solver iterate at the end.
    pub u: DVector<f64>,
    /// Recovered primal point.
    pub x: DVector<f64>,
    pub trace: Vec<String>,
    pub reference: Option<ReferenceSolution>,
}

pub fn load_or_generate(cfg: &ExperimentConfig) -> Result<Instance> {
    match &cfg.instance {
        Some(path) => Instance::load(path),
        None => generate(cfg),
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let inst = load_or_generate(cfg)?;
    let sp = ScenarioProblem::new(cfg.scenario, &inst)?;
    let reference = match cfg.reference {
        Some(method) => Some(reference::compute(
            &sp,
            method,
            cfg.eps,
            cfg.radius,
            cfg.max_iter,
        )?),
        None => None,
    };
    let options = SolveOptions {
        schedule: cfg.schedule.into(),
        max_iter: cfg.max_iter,
        record_every: cfg.record_every,
        reference: reference
            .as_ref()
            .map(|r| DVector::from_column_slice(&r.point)),
        ..SolveOptions::default()
    };
    let execution = match cfg.mode {
        Mode::Centralized => Execution::Centralized,
        Mode::Decentralized => Execution::Decentralized { trace: cfg.trace },
    };
    let (x, out) = sp.solve(cfg.eps, cfg.radius, &options, &execution)?;
    let r = &out.solution.report;
    let gossip = sp.gossip();
    let summary = RunSummary {
        scenario: sp.scenario,
        mode: cfg.mode,
        schedule: cfg.schedule,
        graph: match &cfg.instance {
            Some(p) => format!("file:{}", p.display()),
            None => cfg.graph.to_string(),
        },
        n: gossip.n(),
        edges: gossip.graph().num_edges(),
        kappa_w: gossip.kappa_w(),
        dim: out.dual.dim(),
        lambda: inst.file.lambda,
        eps: cfg.eps,
        radius: cfg.radius,
        seed: inst.file.seed,
        converged: r.converged,
        stop_reason: r.stop_reason,
        iterations: r.iterations,
        comm_rounds: r.comm_rounds,
        grad_evals: r.grad_evals,
        k_applications: r.k_applications,
        kt_applications: r.kt_applications,
        messages: out.ledger.iter().map(|l| l.messages).sum(),
        volume: out.ledger.iter().map(|l| l.volume).sum(),
        tau: r.tau,
        eta: r.eta,
        theta: r.theta,
        alpha: r.alpha,
        final_objective: r.final_objective,
        final_feas_residual: r.final_feas_residual,
        final_dist_to_ref: r.final_dist_to_ref,
        best_error_bound: r.best_error_bound,
        primal_objective: sp.primal_objective(&x)?,
        primal_feas_residual: sp.primal_residual(&x)?,
        reference: reference.as_ref().map(ReferenceSummary::from),
    };
    Ok(RunOutcome {
        summary,
        records: r.records.clone(),
        u: out.solution.u.clone(),
        x,
        trace: out.trace,
        reference,
    })
}

#[derive(Serialize)]
struct CsvRow {
    iter: usize,
    comm_rounds: usize,
    objective: f64,
    feas_residual: f64,
    dist_to_ref: Option<f64>,
}

pub fn write_records(records: &[IterRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(CsvRow {
            iter: r.iter,
            comm_rounds: r.comm_rounds,
            objective: r.objective,
            feas_residual: r.feas_residual,
            dist_to_ref: r.dist_to_ref,
        })?;
    }
    if records.is_empty() {
        w.write_record([
            "iter",
            "comm_rounds",
            "objective",
            "feas_residual",
            "dist_to_ref",
        ])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    std::fs::write(path, json + "\n").map_err(io_err(path))
}

/// Writes the CSV records, the JSON summary and, when present, the trace
/// and the reference into `dir`.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_records(&outcome.records, &dir.join(RECORDS_FILE))?;
    write_json(&outcome.summary, &dir.join(SUMMARY_FILE))?;
    if !outcome.trace.is_empty() {
        let path = dir.join(TRACE_FILE);
        let mut text = outcome.trace.join("\n");
        text.push('\n');
        std::fs::write(&path, text).map_err(io_err(&path))?;
    }
    if let Some(r) = &outcome.reference {
        write_json(r, &dir.join(REFERENCE_FILE))?;
    }
    Ok(())
}

/// Runs one experiment per seed on up to `jobs` threads, each writing to
/// `out/seed-<seed>`. Results come back in seed order.
pub fn run_seeds(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    jobs: usize,
    out: &Path,
) -> Result<Vec<(u64, PathBuf, Result<RunOutcome>)>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| BenchError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let cfg = ExperimentConfig {
                    seed,
                    ..cfg.clone()
                };
                let dir = out.join(format!("seed-{seed}"));
                let result = run(&cfg).and_then(|o| write_outputs(&o, &dir).map(|_| o));
                (seed, dir, result)
            })
            .collect()
    }))
}
