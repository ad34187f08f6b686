//! Convex atoms, feasible sets, prox and prox-value operators.
//!
//! `prox(f, λ, Q, x) = argmin_{y ∈ Q} λ f(y) + ½‖y − x‖²` and `proxv` is the
//! attained minimum. Closed forms are used wherever they exist; every other
//! separable combination goes through a 1-D bisection on the subgradient, and
//! the simplex is handled by bisection on the multiplier of `Σ y = 1`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Membership tolerance for feasible sets.
pub const SET_TOL: f64 = 1e-12;

const BISECTION_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FeasibleSet {
    FullSpace,
    /// The unit simplex `{y ≥ 0, Σ y = 1}`.
    Simplex,
    /// `B_∞(center, radius)`.
    InfBall {
        center: DVector<f64>,
        radius: f64,
    },
}

impl FeasibleSet {
    pub fn inf_ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::InvalidArgument(format!("negative radius {radius}")));
        }
        Ok(FeasibleSet::InfBall { center, radius })
    }

    /// Unit sup-norm ball around the origin.
    pub fn unit_box(dim: usize) -> Self {
        FeasibleSet::InfBall {
            center: DVector::zeros(dim),
            radius: 1.0,
        }
    }

    /// Fixed dimension, if the set carries one.
    pub fn dimension(&self) -> Option<usize> {
        match self {
            FeasibleSet::InfBall { center, .. } => Some(center.len()),
            _ => None,
        }
    }

    pub fn is_separable(&self) -> bool {
        !matches!(self, FeasibleSet::Simplex)
    }

    fn check(&self, x: &DVector<f64>) -> Result<()> {
        match self.dimension() {
            Some(d) => check_dim(d, x.len()),
            None => Ok(()),
        }
    }

    /// Interval `[lo, hi]` of coordinate `i` for box-like sets.
    fn interval(&self, i: usize) -> (f64, f64) {
        match self {
            FeasibleSet::InfBall { center, radius } => (center[i] - radius, center[i] + radius),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        match self {
            FeasibleSet::FullSpace => true,
            FeasibleSet::Simplex => {
                x.iter().all(|&v| v >= -tol) && (x.sum() - 1.0).abs() <= tol * x.len().max(1) as f64
            }
            FeasibleSet::InfBall { center, radius } => {
                x.len() == center.len() && (x - center).amax() <= radius + tol
            }
        }
    }

    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x)?;
        Ok(match self {
            FeasibleSet::FullSpace => x.clone(),
            FeasibleSet::Simplex => project_simplex(x),
            FeasibleSet::InfBall { .. } => DVector::from_fn(x.len(), |i, _| {
                let (lo, hi) = self.interval(i);
                x[i].clamp(lo, hi)
            }),
        })
    }
}

/// Euclidean projection onto the unit simplex (sort and threshold).
pub fn project_simplex(x: &DVector<f64>) -> DVector<f64> {
    if x.is_empty() {
        return x.clone();
    }
    let mut sorted: Vec<f64> = x.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    x.map(|v| (v - theta).max(0.0))
}

/// A closed convex function of a vector argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "name")]
pub enum ConvexAtom {
    Zero,
    /// `‖y‖₁`
    L1,
    /// `½‖y‖²`
    SqL2,
    /// `Σ g(y_i)`, `g(t) = t²/2` for `|t| < 1`, `|t| − ½` otherwise.
    Huber,
    /// `⟨b, y⟩`
    Linear {
        coef: DVector<f64>,
    },
    Indicator {
        set: FeasibleSet,
    },
}

pub fn atom_zero() -> ConvexAtom {
    ConvexAtom::Zero
}

pub fn atom_l1() -> ConvexAtom {
    ConvexAtom::L1
}

pub fn atom_sq_l2() -> ConvexAtom {
    ConvexAtom::SqL2
}

pub fn atom_huber() -> ConvexAtom {
    ConvexAtom::Huber
}

pub fn atom_linear(b: DVector<f64>) -> ConvexAtom {
    ConvexAtom::Linear { coef: b }
}

pub fn atom_indicator(set: FeasibleSet) -> ConvexAtom {
    ConvexAtom::Indicator { set }
}

fn huber(t: f64) -> f64 {
    if t.abs() < 1.0 {
        0.5 * t * t
    } else {
        t.abs() - 0.5
    }
}

fn sign0(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn soft_threshold(t: f64, k: f64) -> f64 {
    sign0(t) * (t.abs() - k).max(0.0)
}

impl ConvexAtom {
    /// Fixed dimension, if the atom carries one.
    pub fn dimension(&self) -> Option<usize> {
        match self {
            ConvexAtom::Linear { coef } => Some(coef.len()),
            ConvexAtom::Indicator { set } => set.dimension(),
            _ => None,
        }
    }

    pub fn strong_convexity(&self) -> f64 {
        match self {
            ConvexAtom::SqL2 => 1.0,
            _ => 0.0,
        }
    }

    /// Gradient Lipschitz constant; infinite for nonsmooth atoms.
    pub fn smoothness(&self) -> f64 {
        match self {
            ConvexAtom::SqL2 | ConvexAtom::Huber => 1.0,
            ConvexAtom::Zero | ConvexAtom::Linear { .. } => 0.0,
            ConvexAtom::L1 => f64::INFINITY,
            ConvexAtom::Indicator { set } => match set {
                FeasibleSet::FullSpace => 0.0,
                _ => f64::INFINITY,
            },
        }
    }

    pub fn is_separable(&self) -> bool {
        match self {
            ConvexAtom::Indicator { set } => set.is_separable(),
            _ => true,
        }
    }

    /// Config name, as used in instance files.
    pub fn name(&self) -> &'static str {
        match self {
            ConvexAtom::Zero => "zero",
            ConvexAtom::L1 => "l1",
            ConvexAtom::SqL2 => "sq_l2",
            ConvexAtom::Huber => "huber",
            ConvexAtom::Linear { .. } => "linear",
            ConvexAtom::Indicator { set } => match set {
                FeasibleSet::FullSpace => "ind_full",
                FeasibleSet::Simplex => "ind_simplex",
                FeasibleSet::InfBall { .. } => "ind_inf_ball",
            },
        }
    }

    fn check(&self, x: &DVector<f64>) -> Result<()> {
        match self.dimension() {
            Some(d) => check_dim(d, x.len()),
            None => Ok(()),
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        self.check(x)?;
        Ok(match self {
            ConvexAtom::Zero => 0.0,
            ConvexAtom::L1 => x.lp_norm(1),
            ConvexAtom::SqL2 => 0.5 * x.norm_squared(),
            ConvexAtom::Huber => x.iter().map(|&t| huber(t)).sum(),
            ConvexAtom::Linear { coef } => coef.dot(x),
            ConvexAtom::Indicator { set } => {
                if set.contains(x, 1e-9) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        })
    }

    /// One element of the subdifferential; `0` is returned at kinks of `|·|`.
    pub fn subgradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x)?;
        Ok(match self {
            ConvexAtom::Zero | ConvexAtom::Indicator { .. } => DVector::zeros(x.len()),
            ConvexAtom::L1 => x.map(sign0),
            ConvexAtom::SqL2 => x.clone(),
            ConvexAtom::Huber => x.map(|t| t.clamp(-1.0, 1.0)),
            ConvexAtom::Linear { coef } => coef.clone(),
        })
    }

    /// Value of coordinate `i` for separable atoms.
    fn scalar_value(&self, i: usize, t: f64) -> f64 {
        match self {
            ConvexAtom::Zero => 0.0,
            ConvexAtom::L1 => t.abs(),
            ConvexAtom::SqL2 => 0.5 * t * t,
            ConvexAtom::Huber => huber(t),
            ConvexAtom::Linear { coef } => coef[i] * t,
            ConvexAtom::Indicator { set } => {
                let (lo, hi) = set.interval(i);
                if t >= lo - 1e-9 && t <= hi + 1e-9 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    fn scalar_subgradient(&self, i: usize, t: f64) -> f64 {
        match self {
            ConvexAtom::Zero | ConvexAtom::Indicator { .. } => 0.0,
            ConvexAtom::L1 => sign0(t),
            ConvexAtom::SqL2 => t,
            ConvexAtom::Huber => t.clamp(-1.0, 1.0),
            ConvexAtom::Linear { coef } => coef[i],
        }
    }

    /// The atom's own domain bounds on coordinate `i` (indicators only).
    fn scalar_domain(&self, i: usize) -> (f64, f64) {
        match self {
            ConvexAtom::Indicator { set } if set.is_separable() => set.interval(i),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Closed-form unconstrained scalar prox of coordinate `i`.
    fn scalar_prox_closed(&self, i: usize, lambda: f64, t: f64) -> f64 {
        match self {
            ConvexAtom::Zero => t,
            ConvexAtom::L1 => soft_threshold(t, lambda),
            ConvexAtom::SqL2 => t / (1.0 + lambda),
            ConvexAtom::Huber => {
                // The quadratic piece is active iff its stationary point stays inside.
                if t.abs() < 1.0 + lambda {
                    t / (1.0 + lambda)
                } else {
                    t - lambda * sign0(t)
                }
            }
            ConvexAtom::Linear { coef } => t - lambda * coef[i],
            ConvexAtom::Indicator { .. } => {
                let (lo, hi) = self.scalar_domain(i);
                t.clamp(lo, hi)
            }
        }
    }

    /// Root of `λ s(y) + y − t` for the monotone subgradient selection `s`.
    fn scalar_prox_bisection(&self, i: usize, lambda: f64, t: f64) -> f64 {
        let phi = |y: f64| lambda * self.scalar_subgradient(i, y) + y - t;
        let mut width = 1.0 + t.abs();
        let (mut lo, mut hi) = (t - width, t + width);
        while phi(lo) > 0.0 || phi(hi) < 0.0 {
            width *= 2.0;
            lo = t - width;
            hi = t + width;
        }
        for _ in 0..BISECTION_ITERS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if phi(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (dlo, dhi) = self.scalar_domain(i);
        (0.5 * (lo + hi)).clamp(dlo, dhi)
    }
}

impl fmt::Display for ConvexAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConvexAtom {
    type Err = Error;

    /// Parameter-free atom names. `linear` and `ind_inf_ball` carry
    /// parameters and are only accepted in their structured form.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "zero" => ConvexAtom::Zero,
            "l1" => ConvexAtom::L1,
            "sq_l2" => ConvexAtom::SqL2,
            "huber" => ConvexAtom::Huber,
            "ind_simplex" => atom_indicator(FeasibleSet::Simplex),
            "ind_full" => atom_indicator(FeasibleSet::FullSpace),
            "linear" | "ind_inf_ball" => {
                return Err(Error::Parse(format!("atom {s:?} needs parameters")))
            }
            other => return Err(Error::Parse(format!("unknown atom {other:?}"))),
        })
    }
}

/// Which scalar prox routine to run for separable problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxMethod {
    ClosedForm,
    Bisection,
}

/// `argmin_{y ∈ Q} λ f(y) + ½‖y − x‖²`.
pub fn prox(
    atom: &ConvexAtom,
    lambda: f64,
    set: &FeasibleSet,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    prox_with(atom, lambda, set, x, ProxMethod::ClosedForm)
}

/// `min_{y ∈ Q} λ f(y) + ½‖y − x‖²`, evaluated at the output of [`prox`].
pub fn proxv(atom: &ConvexAtom, lambda: f64, set: &FeasibleSet, x: &DVector<f64>) -> Result<f64> {
    let y = prox(atom, lambda, set, x)?;
    prox_objective(atom, lambda, x, &y)
}

/// `λ f(y) + ½‖y − x‖²`.
pub fn prox_objective(
    atom: &ConvexAtom,
    lambda: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<f64> {
    Ok(lambda * atom.value(y)? + 0.5 * (y - x).norm_squared())
}

pub fn prox_with(
    atom: &ConvexAtom,
    lambda: f64,
    set: &FeasibleSet,
    x: &DVector<f64>,
    method: ProxMethod,
) -> Result<DVector<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "prox needs lambda > 0, got {lambda}"
        )));
    }
    atom.check(x)?;
    set.check(x)?;

    if let ConvexAtom::Indicator { set: own } = atom {
        if !own.is_separable() {
            // Simplex indicator: only compatible with sets containing the simplex.
            return match set {
                FeasibleSet::FullSpace | FeasibleSet::Simplex => Ok(project_simplex(x)),
                _ if x.len() <= 1 => {
                    let p = project_simplex(x);
                    if set.contains(&p, SET_TOL) {
                        Ok(p)
                    } else {
                        Err(Error::UnsupportedAtom("empty feasible set".into()))
                    }
                }
                _ => Err(Error::UnsupportedAtom(format!(
                    "ind_simplex restricted to {set:?} has no closed-form prox"
                ))),
            };
        }
    }

    let scalar = |i: usize, t: f64| -> f64 {
        match method {
            ProxMethod::ClosedForm => atom.scalar_prox_closed(i, lambda, t),
            ProxMethod::Bisection => atom.scalar_prox_bisection(i, lambda, t),
        }
    };

    match set {
        FeasibleSet::FullSpace | FeasibleSet::InfBall { .. } => {
            // A 1-D convex problem restricted to an interval is solved by clipping.
            let mut out = DVector::zeros(x.len());
            for i in 0..x.len() {
                let (lo, hi) = set.interval(i);
                let (dlo, dhi) = atom.scalar_domain(i);
                let (lo, hi) = (lo.max(dlo), hi.min(dhi));
                if lo > hi {
                    return Err(Error::UnsupportedAtom(format!(
                        "empty feasible interval on coordinate {i}"
                    )));
                }
                out[i] = scalar(i, x[i]).clamp(lo, hi);
            }
            Ok(out)
        }
        FeasibleSet::Simplex => {
            if matches!(atom, ConvexAtom::Zero | ConvexAtom::L1)
                || matches!(
                    atom,
                    ConvexAtom::Indicator {
                        set: FeasibleSet::FullSpace
                    }
                )
            {
                // ‖y‖₁ = 1 is constant on the simplex.
                return Ok(project_simplex(x));
            }
            if method == ProxMethod::ClosedForm {
                match atom {
                    ConvexAtom::SqL2 => return Ok(project_simplex(&(x / (1.0 + lambda)))),
                    ConvexAtom::Linear { coef } => {
                        return Ok(project_simplex(&(x - coef * lambda)))
                    }
                    _ => {}
                }
            }
            simplex_multiplier_search(x, |i, t| scalar(i, t).max(0.0))
        }
    }
}

/// Finds `ν` with `Σ y_i(x_i − ν) = 1`, where `y_i` is nondecreasing.
fn simplex_multiplier_search(
    x: &DVector<f64>,
    y_of: impl Fn(usize, f64) -> f64,
) -> Result<DVector<f64>> {
    let n = x.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty vector on the simplex".into()));
    }
    let total = |nu: f64| (0..n).map(|i| y_of(i, x[i] - nu)).sum::<f64>();
    let mut lo = x.min() - 1.0;
    let mut hi = x.max() + 1.0;
    let mut width = 1.0;
    while total(lo) < 1.0 {
        width *= 2.0;
        lo -= width;
        if !lo.is_finite() {
            return Err(Error::UnsupportedAtom(
                "simplex prox: bracket search failed".into(),
            ));
        }
    }
    width = 1.0;
    while total(hi) > 1.0 {
        width *= 2.0;
        hi += width;
        if !hi.is_finite() {
            return Err(Error::UnsupportedAtom(
                "simplex prox: bracket search failed".into(),
            ));
        }
    }
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu = 0.5 * (lo + hi);
    Ok(DVector::from_fn(n, |i, _| y_of(i, x[i] - nu)))
}

/// Scalar value of coordinate `i`; exposed for grid oracles over separable atoms.
pub fn coordinate_value(atom: &ConvexAtom, i: usize, t: f64) -> f64 {
    atom.scalar_value(i, t)
}
