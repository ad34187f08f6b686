//! Reference solutions that runs are measured against.

use dualsmooth::affine::{
    regularize, AffineConstrainedProblem, ConstraintOperator, Objective, QuadraticObjective,
};
use dualsmooth::apapc::{solve, SolveOptions, StopRule, TauSchedule, DRIVER_RESIDUAL_FACTOR};
use dualsmooth::atoms::{ConvexAtom, FeasibleSet};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::scenario::{Primal, ScenarioProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Method {
    KktDirect,
    LongRun,
}

/// Long runs get this many times the experiment's iteration budget.
pub const LONG_RUN_BUDGET_FACTOR: usize = 100;
/// Long runs tighten the experiment's residual tolerances by this factor.
pub const LONG_RUN_TOLERANCE_FACTOR: f64 = 1e-3;
/// Long runs also end once this many checks pass without a 0.1% gain in
/// the residuals, which is where roundoff takes over.
pub const LONG_RUN_STAGNATION_CHECKS: usize = 2_000;
const LONG_RUN_CHECK_EVERY: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub method: Method,
    /// In the solver's variable layout.
    pub point: Vec<f64>,
    /// Recovered primal point.
    pub primal: Vec<f64>,
    /// Primal objective at `primal`.
    pub objective: f64,
    /// Solver objective at `point`.
    pub dual_objective: f64,
    /// Best certified bound on the distance from `point` to the exact
    /// solution, never below `feas_residual`. For long runs at small `ε`
    /// this bound is limited by roundoff and is far looser than the
    /// actual error.
    pub certified_tolerance: f64,
    /// `‖K point − c‖`.
    pub feas_residual: f64,
    pub iterations: usize,
}

/// Solves `[H Kᵀ; K 0] (u, y) = (−g, c)` for a quadratic objective.
///
/// `H` and `g` are read off the objective's gradient, so any Tikhonov term
/// is included. Returns `(u, y, ‖KKT residual‖)`.
pub fn kkt_solve(problem: &AffineConstrainedProblem) -> Result<(DVector<f64>, DVector<f64>, f64)> {
    if !matches!(problem.objective(), Objective::Quadratic(_)) {
        return Err(BenchError::Unsupported(
            "kkt_direct needs a quadratic objective".into(),
        ));
    }
    let d = problem.dim();
    let k = problem.constraint().to_dense();
    let m = k.nrows();
    let g = problem.gradient(&DVector::zeros(d))?;
    let mut h = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut e = DVector::zeros(d);
        e[j] = 1.0;
        h.set_column(j, &(problem.gradient(&e)? - &g));
    }
    let mut sys = DMatrix::zeros(d + m, d + m);
    sys.view_mut((0, 0), (d, d)).copy_from(&h);
    sys.view_mut((0, d), (d, m)).copy_from(&k.transpose());
    sys.view_mut((d, 0), (m, d)).copy_from(&k);
    let mut rhs = DVector::zeros(d + m);
    rhs.rows_mut(0, d).copy_from(&(-&g));
    rhs.rows_mut(d, m).copy_from(problem.rhs());
    // Rank-deficient K leaves y non-unique; the SVD picks the least-norm one.
    let svd = sys.clone().svd(true, true);
    let tol = 1e-13 * svd.singular_values.max();
    let mut sol = svd
        .solve(&rhs, tol)
        .map_err(|e| BenchError::Unsupported(e.into()))?;
    // One step of iterative refinement.
    let r = &rhs - &sys * &sol;
    sol += svd
        .solve(&r, tol)
        .map_err(|e| BenchError::Unsupported(e.into()))?;
    let residual = (&sys * &sol - &rhs).norm();
    Ok((
        sol.rows(0, d).into_owned(),
        sol.rows(d, m).into_owned(),
        residual,
    ))
}

/// Direct solution of a coupled instance whose atoms are `zero` or `sq_l2`
/// on the full space, where the primal is an equality-constrained
/// quadratic. The point is the matching dual `z_i = −y`.
pub fn kkt_direct(sp: &ScenarioProblem) -> Result<ReferenceSolution> {
    let p = match &sp.primal {
        Primal::Coupled(p) if sp.scenario == crate::config::Scenario::BasisPursuit => p,
        _ => {
            return Err(BenchError::Unsupported(
                "kkt_direct handles coupled instances through the plain dual".into(),
            ))
        }
    };
    let mut curvature = Vec::new();
    for (i, atom) in p.atoms.iter().enumerate() {
        if p.sets[i] != FeasibleSet::FullSpace {
            return Err(BenchError::Unsupported(
                "kkt_direct needs unconstrained blocks".into(),
            ));
        }
        let c = match atom {
            ConvexAtom::Zero => p.lambda,
            ConvexAtom::SqL2 => 1.0 + p.lambda,
            other => {
                return Err(BenchError::Unsupported(format!(
                    "kkt_direct needs quadratic atoms, got {}",
                    other.name()
                )))
            }
        };
        curvature.extend(std::iter::repeat_n(c, p.a[i].ncols()));
    }
    let h = DMatrix::from_diagonal(&DVector::from_vec(curvature));
    let dim = h.nrows();
    let primal = AffineConstrainedProblem::new(
        Objective::Quadratic(QuadraticObjective::new(h, DVector::zeros(dim))?),
        ConstraintOperator::Dense(p.stacked_matrix()),
        p.total_rhs(),
    )?;
    let (x, y, residual) = kkt_solve(&primal)?;
    let z = DVector::from_iterator(
        p.n() * p.p(),
        (0..p.n()).flat_map(|_| (-&y).iter().copied().collect::<Vec<_>>()),
    );
    let dual = sp.dual()?;
    Ok(ReferenceSolution {
        method: Method::KktDirect,
        objective: sp.primal_objective(&x)?,
        dual_objective: dual.value(&z)?,
        feas_residual: dual.residual(&z).norm(),
        certified_tolerance: residual.max(dual.residual(&z).norm()),
        point: z.as_slice().to_vec(),
        primal: x.as_slice().to_vec(),
        iterations: 0,
    })
}

/// Runs the solver on the same regularized problem as an experiment with
/// accuracy `eps` and iteration budget `budget`, for
/// [`LONG_RUN_BUDGET_FACTOR`] times the budget and residual tolerances
/// [`LONG_RUN_TOLERANCE_FACTOR`] times the experiment's.
///
/// The reciprocal step schedule is used here; it is independent of the
/// schedule under test and much faster on the dual problems.
pub fn long_run(
    sp: &ScenarioProblem,
    eps: f64,
    radius: f64,
    budget: usize,
    initial: Option<DVector<f64>>,
) -> Result<ReferenceSolution> {
    let dual = sp.dual()?;
    let reg = regularize(&dual, eps, radius, &DVector::zeros(dual.dim()), Some(1.0))?;
    let tol = eps * DRIVER_RESIDUAL_FACTOR * LONG_RUN_TOLERANCE_FACTOR;
    let options = SolveOptions {
        schedule: TauSchedule::Reciprocal,
        stop: StopRule::Residuals {
            feas: tol,
            opt: tol,
        },
        max_iter: budget.saturating_mul(LONG_RUN_BUDGET_FACTOR),
        check_every: LONG_RUN_CHECK_EVERY,
        record_every: 0,
        initial,
        stagnation_checks: Some(LONG_RUN_STAGNATION_CHECKS),
        ..SolveOptions::default()
    };
    let sol = solve(&reg, &options)?;
    let x = sp.recover(&sol.u, &sol.multiplier)?;
    let feas = reg.residual(&sol.u).norm();
    Ok(ReferenceSolution {
        method: Method::LongRun,
        objective: sp.primal_objective(&x)?,
        dual_objective: reg.value(&sol.u)?,
        certified_tolerance: sol
            .report
            .best_error_bound
            .unwrap_or(f64::INFINITY)
            .max(feas),
        feas_residual: feas,
        point: sol.u.as_slice().to_vec(),
        primal: x.as_slice().to_vec(),
        iterations: sol.report.iterations,
    })
}

pub fn compute(
    sp: &ScenarioProblem,
    method: Method,
    eps: f64,
    radius: f64,
    budget: usize,
) -> Result<ReferenceSolution> {
    match method {
        Method::KktDirect => kkt_direct(sp),
        Method::LongRun => long_run(sp, eps, radius, budget, None),
    }
}
