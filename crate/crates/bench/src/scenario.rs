//! Maps a scenario onto the library transforms. Each preset is one match
//! arm here; the math lives in `dualsmooth`.

use dualsmooth::affine::AffineConstrainedProblem;
use dualsmooth::apapc::{
    solve_basis_pursuit_dd, solve_consensus_dual, solve_coupled_dual, solve_mse_dd, DriverOutput,
    Execution, SolveOptions,
};
use dualsmooth::duality::{
    basis_pursuit_dd_primal, double_dual_basis_pursuit, double_dual_mse, dualize_consensus,
    dualize_coupled, recover_primal_consensus, recover_primal_coupled,
};
use dualsmooth::graph::GossipOperator;
use dualsmooth::problem::{ConsensusProblem, CoupledProblem};
use nalgebra::DVector;

use crate::config::Scenario;
use crate::error::{BenchError, Result};
use crate::instance::{Instance, ProblemType};

#[derive(Debug, Clone, PartialEq)]
pub enum Primal {
    Coupled(CoupledProblem),
    Consensus(ConsensusProblem),
}

/// An instance paired with the transform that solves it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioProblem {
    /// Never `Custom`; custom instances resolve to the plain dual of their type.
    pub scenario: Scenario,
    pub primal: Primal,
}

impl ScenarioProblem {
    pub fn new(scenario: Scenario, inst: &Instance) -> Result<Self> {
        let kind = inst.file.kind;
        let scenario = match (scenario, kind) {
            (Scenario::Custom, ProblemType::Coupled) => Scenario::BasisPursuit,
            (Scenario::Custom, ProblemType::Consensus) => Scenario::MaeConsensus,
            (s, ProblemType::Coupled) if s.is_coupled() => s,
            (s, ProblemType::Consensus) if !s.is_coupled() => s,
            (s, k) => {
                return Err(BenchError::Config(format!(
                    "scenario {s} does not apply to a {k:?} instance"
                )));
            }
        };
        let primal = match kind {
            ProblemType::Coupled => Primal::Coupled(inst.coupled()?),
            ProblemType::Consensus => Primal::Consensus(inst.consensus()?),
        };
        Ok(ScenarioProblem { scenario, primal })
    }

    pub fn gossip(&self) -> &GossipOperator {
        match &self.primal {
            Primal::Coupled(p) => &p.gossip,
            Primal::Consensus(p) => &p.gossip,
        }
    }

    /// The problem the solver iterates on, before regularization.
    pub fn dual(&self) -> Result<AffineConstrainedProblem> {
        Ok(match (&self.primal, self.scenario) {
            (Primal::Coupled(p), Scenario::BasisPursuitDd) => double_dual_basis_pursuit(p)?,
            (Primal::Coupled(p), _) => dualize_coupled(p)?,
            (Primal::Consensus(p), Scenario::MseDd) => double_dual_mse(p)?,
            (Primal::Consensus(p), _) => dualize_consensus(p)?,
        })
    }

    /// Solves with `μ = ε/R²` and returns the recovered primal point.
    pub fn solve(
        &self,
        eps: f64,
        radius: f64,
        options: &SolveOptions,
        execution: &Execution,
    ) -> Result<(DVector<f64>, DriverOutput)> {
        Ok(match (&self.primal, self.scenario) {
            (Primal::Coupled(p), Scenario::BasisPursuitDd) => {
                let s = solve_basis_pursuit_dd(p, eps, radius, options, execution)?;
                (s.x, s.output)
            }
            (Primal::Coupled(p), _) => {
                let s = solve_coupled_dual(p, eps, radius, options, execution)?;
                (s.x, s.output)
            }
            (Primal::Consensus(p), Scenario::MseDd) => {
                let s = solve_mse_dd(p, eps, radius, options, execution)?;
                (s.x, s.output)
            }
            (Primal::Consensus(p), _) => {
                let s = solve_consensus_dual(p, eps, radius, options, execution)?;
                (s.x, s.output)
            }
        })
    }

    /// Primal point from a solver iterate `u` and its multiplier.
    pub fn recover(&self, u: &DVector<f64>, multiplier: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(match (&self.primal, self.scenario) {
            (Primal::Coupled(p), Scenario::BasisPursuitDd) => basis_pursuit_dd_primal(p, u)?,
            (Primal::Coupled(p), _) => recover_primal_coupled(p, u)?,
            (Primal::Consensus(_), Scenario::MseDd) => u.clone(),
            (Primal::Consensus(p), _) => recover_primal_consensus(p, multiplier)?,
        })
    }

    pub fn primal_objective(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(match &self.primal {
            Primal::Coupled(p) => p.objective(x)?,
            Primal::Consensus(p) => p.objective(x)?,
        })
    }

    /// `‖Σ(A_i x_i − b_i)‖` for coupled problems, `‖𝐖x‖` for consensus.
    pub fn primal_residual(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(match &self.primal {
            Primal::Coupled(p) => p.coupling_residual(x)?.norm(),
            Primal::Consensus(p) => p.consensus_residual(x)?,
        })
    }
}
