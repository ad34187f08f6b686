//! Accelerated primal-dual solver for `min P(u) s.t. K u = c` with `P`
//! smooth and strongly convex, and the drivers built on top of it.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::affine::{regularize, AffineConstrainedProblem};
use crate::duality::{
    basis_pursuit_dd_primal, consensus_dual_z, double_dual_basis_pursuit, double_dual_mse,
    dualize_consensus, dualize_coupled, recover_primal_consensus, recover_primal_coupled,
};
use crate::error::{check_dim, Error, Result};
use crate::netsim::RoundLog;
use crate::problem::{ConsensusProblem, CoupledProblem};
use crate::report::{IterRecord, RunReport, StopReason};

/// Growth of `‖u‖` beyond `DIVERGENCE_FACTOR · (1 + ‖u⁰‖)` aborts a run.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

/// Default relative tolerance of [`StopRule::Residuals`].
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-9;

/// Relative residual tolerance per unit of target accuracy used by the
/// regularized drivers. The certified bound divides roundoff by `μ = ε/R²`
/// and stalls far above `ε`, while both residuals track `‖u − u*‖` closely.
pub const DRIVER_RESIDUAL_FACTOR: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApapcParams {
    pub tau: f64,
    pub eta: f64,
    pub theta: f64,
    pub alpha: f64,
}

impl ApapcParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tau > 0.0
            && self.tau <= 1.0
            && self.eta > 0.0
            && self.theta > 0.0
            && self.alpha >= 0.0
            && self.eta.is_finite()
            && self.theta.is_finite()
            && self.alpha.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid solver parameters {self:?}"
            )))
        }
    }
}

/// Which ratio of condition numbers sets `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauSchedule {
    /// `τ = min(1, ½ √(κ_K / κ_P))`.
    #[default]
    Verbatim,
    /// `τ = min(1, ½ √(κ_P / κ_K))`.
    Reciprocal,
}

/// `τ` per `schedule`, `η = 1/(4τL_P)`, `θ = 1/(η λ_max(KᵀK))`, `α = μ_P`.
pub fn default_params(l_p: f64, mu_p: f64, lam_max: f64, lam_min_plus: f64) -> Result<ApapcParams> {
    params_with_schedule(l_p, mu_p, lam_max, lam_min_plus, TauSchedule::Verbatim)
}

pub fn params_with_schedule(
    l_p: f64,
    mu_p: f64,
    lam_max: f64,
    lam_min_plus: f64,
    schedule: TauSchedule,
) -> Result<ApapcParams> {
    for (name, v) in [
        ("L_P", l_p),
        ("mu_P", mu_p),
        ("lambda_max(K^T K)", lam_max),
        ("lambda_min+(K^T K)", lam_min_plus),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    let kappa_p = l_p / mu_p;
    let kappa_k = lam_max / lam_min_plus;
    let ratio = match schedule {
        TauSchedule::Verbatim => kappa_k / kappa_p,
        TauSchedule::Reciprocal => kappa_p / kappa_k,
    };
    let tau = (0.5 * ratio.sqrt()).min(1.0);
    let eta = 1.0 / (4.0 * tau * l_p);
    Ok(ApapcParams {
        tau,
        eta,
        theta: 1.0 / (eta * lam_max),
        alpha: mu_p,
    })
}

/// Parameters for `problem` under `schedule`.
pub fn problem_params(
    problem: &AffineConstrainedProblem,
    schedule: TauSchedule,
) -> Result<ApapcParams> {
    let k = problem.k_spectrum();
    params_with_schedule(
        problem.smoothness(),
        problem.strong_convexity(),
        k.l,
        k.mu,
        schedule,
    )
}

/// Iterates, multipliers and operation counters.
///
/// `y` is the multiplier in the constraint space; `z = Kᵀy` is kept
/// alongside it so that `z` stays in the range of `Kᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApapcState {
    pub u: DVector<f64>,
    pub u_f: DVector<f64>,
    pub u_g: DVector<f64>,
    pub u_half: DVector<f64>,
    pub z: DVector<f64>,
    pub y: DVector<f64>,
    pub k: usize,
    /// `‖K u_half − c‖` of the last step.
    pub feas_half: f64,
    pub grad_evals: usize,
    pub k_applications: usize,
    pub kt_applications: usize,
}

impl ApapcState {
    /// `u_f⁰ = u⁰`, zero multipliers.
    pub fn new(problem: &AffineConstrainedProblem, u0: DVector<f64>) -> Result<Self> {
        check_dim(problem.dim(), u0.len())?;
        let m = problem.constraint().rows();
        Ok(ApapcState {
            u_f: u0.clone(),
            u_g: u0.clone(),
            u_half: u0.clone(),
            z: DVector::zeros(u0.len()),
            y: DVector::zeros(m),
            u: u0,
            k: 0,
            feas_half: f64::NAN,
            grad_evals: 0,
            k_applications: 0,
            kt_applications: 0,
        })
    }

    /// Starts from a multiplier `y⁰`, with `z⁰ = Kᵀy⁰`.
    pub fn with_multiplier(
        problem: &AffineConstrainedProblem,
        u0: DVector<f64>,
        y0: DVector<f64>,
    ) -> Result<Self> {
        let mut s = Self::new(problem, u0)?;
        check_dim(s.y.len(), y0.len())?;
        s.z = problem.apply_kt(&y0);
        s.y = y0;
        Ok(s)
    }
}

/// One iteration. Costs one gradient, one `K` and one `Kᵀ` application.
pub fn step(
    state: &mut ApapcState,
    problem: &AffineConstrainedProblem,
    params: &ApapcParams,
) -> Result<()> {
    let ApapcParams {
        tau,
        eta,
        theta,
        alpha,
    } = *params;
    let shrink = 1.0 / (1.0 + eta * alpha);
    state.u_g = &state.u * tau + &state.u_f * (1.0 - tau);
    let g = problem.gradient(&state.u_g)? - &state.u_g * alpha;
    state.grad_evals += 1;
    state.u_half = (&state.u - (&g + &state.z) * eta) * shrink;
    let r = problem.residual(&state.u_half);
    state.k_applications += 1;
    state.feas_half = r.norm();
    state.z += problem.apply_kt(&r) * theta;
    state.kt_applications += 1;
    state.y += &r * theta;
    let u_next = (&state.u - (&g + &state.z) * eta) * shrink;
    state.u_f = &state.u_g + (&u_next - &state.u) * (2.0 * tau / (2.0 - tau));
    state.u = u_next;
    state.k += 1;
    Ok(())
}

/// When a run counts as converged.
#[derive(Debug, Clone, PartialEq)]
pub enum StopRule {
    /// Certified `‖u − u*‖ ≤ eps` through
    /// `‖u − u*‖ ≤ f/σ + (‖∇P(u) + z‖ + L_P f/σ)/μ_P`, with `f = ‖Ku − c‖`
    /// and `σ² = λ_min⁺(KᵀK)`.
    Accuracy(f64),
    /// `‖K u_half − c‖ ≤ feas · (1 + ‖c‖)` and
    /// `‖∇P(u) + z‖ ≤ opt · (1 + ‖∇P(u⁰)‖)`.
    Residuals { feas: f64, opt: f64 },
    /// `‖u − point‖ ≤ eps`.
    Reference { point: DVector<f64>, eps: f64 },
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule::Residuals {
            feas: DEFAULT_RESIDUAL_TOL,
            opt: DEFAULT_RESIDUAL_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Overrides the schedule-derived parameters.
    pub params: Option<ApapcParams>,
    pub schedule: TauSchedule,
    pub stop: StopRule,
    pub max_iter: usize,
    /// Stop rule evaluated every this many iterations.
    pub check_every: usize,
    /// Iterate logged every this many iterations; `0` logs only the last.
    pub record_every: usize,
    /// Logged as `dist_to_ref` when present.
    pub reference: Option<DVector<f64>>,
    pub initial: Option<DVector<f64>>,
    pub initial_multiplier: Option<DVector<f64>>,
    /// Stop after this many checks without a 0.1% gain in the quantity the
    /// stop rule measures.
    pub stagnation_checks: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            params: None,
            schedule: TauSchedule::default(),
            stop: StopRule::default(),
            max_iter: 100_000,
            check_every: 1,
            record_every: 1,
            reference: None,
            initial: None,
            initial_multiplier: None,
            stagnation_checks: None,
        }
    }
}

/// A solver execution strategy: the centralized state or a simulated network.
pub trait Engine {
    fn step(&mut self, params: &ApapcParams) -> Result<()>;
    fn iterate(&self) -> DVector<f64>;
    fn dual(&self) -> DVector<f64>;
    fn multiplier(&self) -> DVector<f64>;
    /// `‖K u_half − c‖` of the last step.
    fn feas_half(&self) -> f64;
    fn grad_evals(&self) -> usize;
    fn k_applications(&self) -> usize;
    fn kt_applications(&self) -> usize;
    fn comm_rounds(&self) -> usize;
}

struct Central<'a> {
    problem: &'a AffineConstrainedProblem,
    state: ApapcState,
}

impl Engine for Central<'_> {
    fn step(&mut self, params: &ApapcParams) -> Result<()> {
        step(&mut self.state, self.problem, params)
    }
    fn iterate(&self) -> DVector<f64> {
        self.state.u.clone()
    }
    fn dual(&self) -> DVector<f64> {
        self.state.z.clone()
    }
    fn multiplier(&self) -> DVector<f64> {
        self.state.y.clone()
    }
    fn feas_half(&self) -> f64 {
        self.state.feas_half
    }
    fn grad_evals(&self) -> usize {
        self.state.grad_evals
    }
    fn k_applications(&self) -> usize {
        self.state.k_applications
    }
    fn kt_applications(&self) -> usize {
        self.state.kt_applications
    }
    fn comm_rounds(&self) -> usize {
        let per = self.problem.constraint().rounds_per_application();
        per * (self.state.k_applications + self.state.kt_applications)
    }
}

/// Final point of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub u: DVector<f64>,
    /// Constraint multiplier `y`, with `Kᵀy` the solver's `z`.
    pub multiplier: DVector<f64>,
    pub report: RunReport,
}

pub fn resolve_params(
    problem: &AffineConstrainedProblem,
    options: &SolveOptions,
) -> Result<ApapcParams> {
    let params = match options.params {
        Some(p) => p,
        None => problem_params(problem, options.schedule)?,
    };
    params.validate()?;
    Ok(params)
}

pub fn initial_state(
    problem: &AffineConstrainedProblem,
    options: &SolveOptions,
) -> Result<ApapcState> {
    let u0 = options
        .initial
        .clone()
        .unwrap_or_else(|| DVector::zeros(problem.dim()));
    match &options.initial_multiplier {
        Some(y0) => ApapcState::with_multiplier(problem, u0, y0.clone()),
        None => ApapcState::new(problem, u0),
    }
}

/// Runs the solver centrally.
pub fn solve(problem: &AffineConstrainedProblem, options: &SolveOptions) -> Result<Solution> {
    let params = resolve_params(problem, options)?;
    let state = initial_state(problem, options)?;
    let mut engine = Central { problem, state };
    drive(&mut engine, problem, &params, options)
}

struct Monitor {
    objective: f64,
    feas: f64,
    grad_residual: f64,
    dist: Option<f64>,
}

fn monitor(
    engine: &dyn Engine,
    problem: &AffineConstrainedProblem,
    reference: Option<&DVector<f64>>,
) -> Result<Monitor> {
    let u = engine.iterate();
    let feas = problem.residual(&u).norm();
    let grad_residual = (problem.gradient(&u)? + engine.dual()).norm();
    Ok(Monitor {
        objective: problem.value(&u)?,
        feas,
        grad_residual,
        dist: reference.map(|r| (&u - r).norm()),
    })
}

fn error_bound(problem: &AffineConstrainedProblem, m: &Monitor) -> Option<f64> {
    let mu = problem.strong_convexity();
    if !(mu > 0.0) {
        return None;
    }
    let sigma = problem.k_spectrum().mu.sqrt();
    let off = m.feas / sigma;
    Some(off + (m.grad_residual + problem.smoothness() * off) / mu)
}

/// The shared iteration loop: stepping, monitoring, stopping and logging.
pub fn drive(
    engine: &mut dyn Engine,
    problem: &AffineConstrainedProblem,
    params: &ApapcParams,
    options: &SolveOptions,
) -> Result<Solution> {
    if let Some(r) = &options.reference {
        check_dim(problem.dim(), r.len())?;
    }
    let check_every = options.check_every.max(1);
    let u0 = engine.iterate();
    let limit = DIVERGENCE_FACTOR * (1.0 + u0.norm());
    let c_scale = 1.0 + problem.rhs().norm();
    let g_scale = 1.0 + problem.gradient(&u0)?.norm();

    let mut records = Vec::new();
    let mut best_bound: Option<f64> = None;
    let mut best_progress: Option<f64> = None;
    let mut checks_since_gain = 0usize;
    let mut stop_reason = StopReason::MaxIterations;
    let mut last: Option<(usize, Monitor)> = None;
    let mut iterations = 0;

    while iterations < options.max_iter {
        engine.step(params)?;
        iterations += 1;
        let u_norm = engine.iterate().norm();
        if !u_norm.is_finite() || !engine.feas_half().is_finite() {
            return Err(Error::Diverged {
                iteration: iterations,
                reason: "non-finite iterate".into(),
            });
        }
        if u_norm > limit {
            return Err(Error::Diverged {
                iteration: iterations,
                reason: format!("iterate norm {u_norm:.3e} exceeds {limit:.3e}"),
            });
        }

        let check = iterations % check_every == 0;
        let record = options.record_every > 0 && iterations % options.record_every == 0;
        if !(check || record) {
            continue;
        }
        let m = monitor(engine, problem, options.reference.as_ref())?;
        if record {
            records.push(IterRecord {
                iter: iterations,
                comm_rounds: engine.comm_rounds(),
                objective: m.objective,
                feas_residual: m.feas,
                dist_to_ref: m.dist,
            });
        }
        if check {
            let bound = error_bound(problem, &m);
            if let Some(b) = bound {
                best_bound = Some(best_bound.map_or(b, |best| best.min(b)));
            }
            let (progress, done) = match &options.stop {
                StopRule::Accuracy(eps) => (bound, bound.is_some_and(|b| b <= *eps)),
                StopRule::Residuals { feas, opt } => {
                    let f = engine.feas_half() / (feas * c_scale);
                    let g = m.grad_residual / (opt * g_scale);
                    (Some(f.max(g)), f <= 1.0 && g <= 1.0)
                }
                StopRule::Reference { point, eps } => {
                    let dist = (engine.iterate() - point).norm();
                    (Some(dist), dist <= *eps)
                }
            };
            if let Some(v) = progress {
                match best_progress {
                    Some(best) if v >= best * (1.0 - 1e-3) => checks_since_gain += 1,
                    _ => {
                        checks_since_gain = 0;
                        best_progress = Some(v);
                    }
                }
            }
            if done {
                stop_reason = StopReason::Converged;
                last = Some((iterations, m));
                break;
            }
            if options
                .stagnation_checks
                .is_some_and(|w| checks_since_gain >= w)
            {
                stop_reason = StopReason::Stagnated;
                last = Some((iterations, m));
                break;
            }
        }
        last = Some((iterations, m));
    }

    let m = match last {
        Some((at, m)) if at == iterations => m,
        _ => monitor(engine, problem, options.reference.as_ref())?,
    };
    if options.record_every == 0 || records.last().is_none_or(|r| r.iter != iterations) {
        records.push(IterRecord {
            iter: iterations,
            comm_rounds: engine.comm_rounds(),
            objective: m.objective,
            feas_residual: m.feas,
            dist_to_ref: m.dist,
        });
    }
    if let Some(b) = error_bound(problem, &m) {
        best_bound = Some(best_bound.map_or(b, |best| best.min(b)));
    }
    let report = RunReport {
        converged: stop_reason == StopReason::Converged,
        stop_reason,
        iterations,
        comm_rounds: engine.comm_rounds(),
        grad_evals: engine.grad_evals(),
        k_applications: engine.k_applications(),
        kt_applications: engine.kt_applications(),
        tau: params.tau,
        eta: params.eta,
        theta: params.theta,
        alpha: params.alpha,
        final_objective: m.objective,
        final_feas_residual: m.feas,
        final_dist_to_ref: m.dist,
        best_error_bound: best_bound,
        records,
    };
    Ok(Solution {
        u: engine.iterate(),
        multiplier: engine.multiplier(),
        report,
    })
}

/// Convex but not strongly convex `P`: adds `(ε/2R²)‖u − anchor‖²` and
/// solves to the inner accuracy recorded by [`regularize`].
///
/// Returns the solution together with the regularized problem.
pub fn solve_nonstrongly(
    problem: &AffineConstrainedProblem,
    eps: f64,
    radius: f64,
    anchor: &DVector<f64>,
    options: &SolveOptions,
) -> Result<(Solution, AffineConstrainedProblem)> {
    let reg = regularize(problem, eps, radius, anchor, None)?;
    let delta = reg.inner_tolerance().expect("set by regularize");
    let options = SolveOptions {
        stop: StopRule::Accuracy(delta.sqrt()),
        initial: options.initial.clone().or_else(|| Some(anchor.clone())),
        ..options.clone()
    };
    let sol = solve(&reg, &options)?;
    Ok((sol, reg))
}

/// How a driver executes the solver.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Execution {
    #[default]
    Centralized,
    Decentralized {
        trace: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriverOutput {
    /// The regularized dual problem that was solved.
    pub dual: AffineConstrainedProblem,
    pub solution: Solution,
    /// Communication rounds, empty for centralized runs.
    pub ledger: Vec<RoundLog>,
    /// Round-level trace lines when run decentralized with tracing.
    pub trace: Vec<String>,
}

/// Regularizes `dual` with `(ε/2R²)‖u‖²` and solves it. The default stop
/// is replaced by residual tolerances of [`DRIVER_RESIDUAL_FACTOR`] `· ε`.
pub fn solve_regularized(
    dual: AffineConstrainedProblem,
    eps: f64,
    radius: f64,
    options: &SolveOptions,
    execution: &Execution,
) -> Result<DriverOutput> {
    let anchor = DVector::zeros(dual.dim());
    if !(eps > 0.0 && radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need eps > 0 and R > 0, got ({eps}, {radius})"
        )));
    }
    let dual = regularize(&dual, eps, radius, &anchor, Some(1.0))?;
    let options = SolveOptions {
        stop: match &options.stop {
            r if *r == StopRule::default() => StopRule::Residuals {
                feas: DRIVER_RESIDUAL_FACTOR * eps,
                opt: DRIVER_RESIDUAL_FACTOR * eps,
            },
            other => other.clone(),
        },
        ..options.clone()
    };
    let (solution, ledger, trace) = match execution {
        Execution::Centralized => (solve(&dual, &options)?, Vec::new(), Vec::new()),
        Execution::Decentralized { trace } => {
            let out = crate::netsim::run_decentralized(&dual, &options, *trace)?;
            (out.solution, out.ledger, out.trace)
        }
    };
    Ok(DriverOutput {
        dual,
        solution,
        ledger,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledDualSolution {
    pub z: DVector<f64>,
    pub x: DVector<f64>,
    pub output: DriverOutput,
}

/// Dualizes, regularizes the dual with `μ = ε/R²`, solves through
/// [`solve_regularized`] and recovers `x`.
pub fn solve_coupled_dual(
    p: &CoupledProblem,
    eps: f64,
    radius: f64,
    options: &SolveOptions,
    execution: &Execution,
) -> Result<CoupledDualSolution> {
    let output = solve_regularized(dualize_coupled(p)?, eps, radius, options, execution)?;
    let z = output.solution.u.clone();
    let x = recover_primal_coupled(p, &z)?;
    Ok(CoupledDualSolution { z, x, output })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusDualSolution {
    /// Stacked `z_i` parts.
    pub z: DVector<f64>,
    /// Full dual point in the `(z_i, u_i)` layout.
    pub zu: DVector<f64>,
    pub x: DVector<f64>,
    pub output: DriverOutput,
}

pub fn solve_consensus_dual(
    p: &ConsensusProblem,
    eps: f64,
    radius: f64,
    options: &SolveOptions,
    execution: &Execution,
) -> Result<ConsensusDualSolution> {
    let output = solve_regularized(dualize_consensus(p)?, eps, radius, options, execution)?;
    let zu = output.solution.u.clone();
    let z = consensus_dual_z(p, &zu)?;
    let x = recover_primal_consensus(p, &output.solution.multiplier)?;
    Ok(ConsensusDualSolution { z, zu, x, output })
}

/// A Huber-smoothed primal solved directly through the double dual.
#[derive(Debug, Clone, PartialEq)]
pub struct HuberSolution {
    /// The primal blocks: `w` for basis pursuit, `x` for regression.
    pub x: DVector<f64>,
    pub output: DriverOutput,
}

pub fn solve_basis_pursuit_dd(
    p: &CoupledProblem,
    eps: f64,
    radius: f64,
    options: &SolveOptions,
    execution: &Execution,
) -> Result<HuberSolution> {
    let output = solve_regularized(
        double_dual_basis_pursuit(p)?,
        eps,
        radius,
        options,
        execution,
    )?;
    let x = basis_pursuit_dd_primal(p, &output.solution.u)?;
    Ok(HuberSolution { x, output })
}

pub fn solve_mse_dd(
    p: &ConsensusProblem,
    eps: f64,
    radius: f64,
    options: &SolveOptions,
    execution: &Execution,
) -> Result<HuberSolution> {
    let output = solve_regularized(double_dual_mse(p)?, eps, radius, options, execution)?;
    let x = output.solution.u.clone();
    Ok(HuberSolution { x, output })
}
