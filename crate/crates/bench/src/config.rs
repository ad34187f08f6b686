//! Experiment configuration shared by the subcommands.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use dualsmooth::apapc::TauSchedule;
use dualsmooth::graph::{build_graph, Graph, GraphKind};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Scenario {
    /// Coupled l1 problem through its smoothed dual.
    BasisPursuit,
    /// Huber basis pursuit solved through the double dual.
    BasisPursuitDd,
    /// Consensus mean absolute error through its smoothed dual.
    MaeConsensus,
    /// Huber consensus regression solved through the double dual.
    MseDd,
    /// Whatever an instance file describes, through its smoothed dual.
    Custom,
}

impl Scenario {
    pub fn is_coupled(self) -> bool {
        matches!(self, Scenario::BasisPursuit | Scenario::BasisPursuitDd)
    }

    /// Noise level used by `generate` when none is given.
    pub fn default_noise(self) -> f64 {
        if self.is_coupled() {
            0.0
        } else {
            0.1
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scenario::BasisPursuit => "basis_pursuit",
            Scenario::BasisPursuitDd => "basis_pursuit_dd",
            Scenario::MaeConsensus => "mae_consensus",
            Scenario::MseDd => "mse_dd",
            Scenario::Custom => "custom",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Centralized,
    Decentralized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Verbatim,
    Reciprocal,
}

impl From<Schedule> for TauSchedule {
    fn from(s: Schedule) -> Self {
        match s {
            Schedule::Verbatim => TauSchedule::Verbatim,
            Schedule::Reciprocal => TauSchedule::Reciprocal,
        }
    }
}

/// A named topology (`path`, `ring`, `star`, `complete`, `er:<p>:<seed>`)
/// or an edge-list file (`file:<path>`).
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSpec {
    Kind(GraphKind),
    File(PathBuf),
}

impl GraphSpec {
    pub fn build(&self, n: usize) -> Result<Graph> {
        match self {
            GraphSpec::Kind(kind) => Ok(build_graph(*kind, n)?),
            GraphSpec::File(path) => {
                let text = std::fs::read_to_string(path).map_err(io_err(path))?;
                let g = Graph::from_edge_list(&text)?;
                if g.n() != n {
                    return Err(BenchError::Config(format!(
                        "{} has {} nodes but n = {n}",
                        path.display(),
                        g.n()
                    )));
                }
                Ok(g)
            }
        }
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSpec::Kind(k) => write!(f, "{k}"),
            GraphSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for GraphSpec {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || BenchError::Config(format!("unknown graph {s:?}"));
        Ok(match s {
            "path" => GraphSpec::Kind(GraphKind::Path),
            "ring" => GraphSpec::Kind(GraphKind::Ring),
            "star" => GraphSpec::Kind(GraphKind::Star),
            "complete" => GraphSpec::Kind(GraphKind::Complete),
            _ => {
                if let Some(path) = s.strip_prefix("file:") {
                    GraphSpec::File(PathBuf::from(path))
                } else if let Some(rest) = s.strip_prefix("er:") {
                    let (p, seed) = rest.split_once(':').ok_or_else(bad)?;
                    GraphSpec::Kind(GraphKind::ErdosRenyi {
                        p: p.parse().map_err(|_| bad())?,
                        seed: seed.parse().map_err(|_| bad())?,
                    })
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub graph: GraphSpec,
    pub n: usize,
    /// Primal dimension per node.
    pub d: usize,
    /// Coupled: constraint rows. Consensus: data rows per node.
    pub p: usize,
    pub lambda: f64,
    pub eps: f64,
    pub radius: f64,
    pub seed: u64,
    /// `None` picks [`Scenario::default_noise`].
    pub noise: Option<f64>,
    pub mode: Mode,
    pub schedule: Schedule,
    /// Load this instance instead of generating one.
    pub instance: Option<PathBuf>,
    pub reference: Option<crate::reference::Method>,
    pub max_iter: usize,
    pub record_every: usize,
    pub trace: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: Scenario::BasisPursuit,
            graph: GraphSpec::Kind(GraphKind::Ring),
            n: 6,
            d: 4,
            p: 3,
            lambda: 1.0,
            eps: 1e-6,
            radius: 10.0,
            seed: 7,
            noise: None,
            mode: Mode::Centralized,
            schedule: Schedule::Verbatim,
            instance: None,
            reference: None,
            max_iter: 2_000_000,
            record_every: 100,
            trace: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(BenchError::Config(m));
        if self.instance.is_none() {
            if self.scenario == Scenario::Custom {
                return fail("the custom scenario needs --instance".into());
            }
            if self.n < 2 || self.d == 0 || self.p == 0 {
                return fail(format!(
                    "need n >= 2 and d, p >= 1, got n={} d={} p={}",
                    self.n, self.d, self.p
                ));
            }
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return fail(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return fail(format!("radius must be positive, got {}", self.radius));
        }
        if let Some(noise) = self.noise {
            if !(noise >= 0.0 && noise.is_finite()) {
                return fail(format!("noise must be nonnegative, got {noise}"));
            }
        }
        if self.max_iter == 0 {
            return fail("max_iter must be positive".into());
        }
        Ok(())
    }
}
