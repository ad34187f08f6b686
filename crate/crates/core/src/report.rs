//! Per-run solver reports.

use serde::{Deserialize, Serialize};

/// One logged iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub comm_rounds: usize,
    pub objective: f64,
    pub feas_residual: f64,
    pub dist_to_ref: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    Stagnated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub converged: bool,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub comm_rounds: usize,
    pub grad_evals: usize,
    pub k_applications: usize,
    pub kt_applications: usize,
    pub tau: f64,
    pub eta: f64,
    pub theta: f64,
    pub alpha: f64,
    pub final_objective: f64,
    pub final_feas_residual: f64,
    pub final_dist_to_ref: Option<f64>,
    /// Smallest certified bound on `‖u − u*‖` seen at a check, if the
    /// problem is strongly convex.
    pub best_error_bound: Option<f64>,
    pub records: Vec<IterRecord>,
}

impl RunReport {
    /// The summary without the per-iteration log.
    pub fn summary(&self) -> RunReport {
        RunReport {
            records: Vec::new(),
            ..self.clone()
        }
    }
}
