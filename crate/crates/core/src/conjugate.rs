//! Regularized Fenchel conjugates
//!
//! ```text
//! φ*_{γψ,S}(v) = max_{u ∈ S} ⟨u, v⟩ − φ(u) − γ ψ(u)
//! ```
//!
//! with `ψ = ½‖·‖²` in the solver path. The inner problem is `γ`-strongly
//! concave, so the maximizer `u*(v)` is unique and is the gradient of the
//! conjugate, which is `1/γ`-Lipschitz. For the quadratic regularizer the
//! maximizer is a prox: `u*(v) = prox_{φ/γ}^S(v/γ)`.
//!
//! [`brute_force_conjugate`] maximizes the same objective over a grid and is
//! meant as a verification oracle only.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::atoms::{coordinate_value, prox, soft_threshold, ConvexAtom, FeasibleSet};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedConjugate {
    base: ConvexAtom,
    regularizer: ConvexAtom,
    gamma: f64,
    set: FeasibleSet,
}

impl SmoothedConjugate {
    pub fn new(
        base: ConvexAtom,
        regularizer: ConvexAtom,
        gamma: f64,
        set: FeasibleSet,
    ) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "smoothing needs gamma > 0, got {gamma}"
            )));
        }
        if !(regularizer.strong_convexity() > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "regularizer {regularizer} is not strongly convex"
            )));
        }
        Ok(SmoothedConjugate {
            base,
            regularizer,
            gamma,
            set,
        })
    }

    /// Conjugate smoothed with `γ·½‖·‖²`.
    pub fn quadratic(base: ConvexAtom, gamma: f64, set: FeasibleSet) -> Result<Self> {
        Self::new(base, ConvexAtom::SqL2, gamma, set)
    }

    pub fn base(&self) -> &ConvexAtom {
        &self.base
    }

    pub fn regularizer(&self) -> &ConvexAtom {
        &self.regularizer
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn set(&self) -> &FeasibleSet {
        &self.set
    }

    /// Lipschitz constant of the gradient, `1 / (γ μ_ψ)`.
    pub fn smoothness_bound(&self) -> f64 {
        1.0 / (self.gamma * self.regularizer.strong_convexity())
    }

    fn require_quadratic(&self) -> Result<()> {
        if self.regularizer != ConvexAtom::SqL2 {
            return Err(Error::UnsupportedConjugate(format!(
                "({}, {}): only the quadratic regularizer has a closed form",
                self.base, self.regularizer
            )));
        }
        Ok(())
    }

    /// Inner objective `⟨u, v⟩ − φ(u) − γψ(u)`.
    pub fn inner_objective(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        Ok(u.dot(v) - self.base.value(u)? - self.gamma * self.regularizer.value(u)?)
    }

    pub fn value(&self, v: &DVector<f64>) -> Result<f64> {
        self.require_quadratic()?;
        let g = self.gamma;
        match (&self.base, &self.set) {
            (ConvexAtom::L1, FeasibleSet::FullSpace) => Ok(v
                .iter()
                .map(|&t| (t.abs() - 1.0).max(0.0).powi(2))
                .sum::<f64>()
                / (2.0 * g)),
            (ConvexAtom::Linear { coef }, FeasibleSet::InfBall { center, radius })
                if *radius == 1.0 && center.iter().all(|&c| c == 0.0) =>
            {
                check_dim(coef.len(), v.len())?;
                let w = v - coef;
                let excess: f64 = w
                    .iter()
                    .map(|&t| (t.abs() / g - 1.0).max(0.0).powi(2))
                    .sum();
                Ok(w.norm_squared() / (2.0 * g) - 0.5 * g * excess)
            }
            _ => {
                let u = self.grad(v)?;
                self.inner_objective(&u, v)
            }
        }
    }

    /// The maximizer `u*(v)`, i.e. the gradient of [`Self::value`].
    pub fn grad(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.require_quadratic()?;
        let g = self.gamma;
        match (&self.base, &self.set) {
            (ConvexAtom::L1, FeasibleSet::FullSpace) => Ok(v.map(|t| soft_threshold(t, 1.0) / g)),
            (ConvexAtom::Linear { coef }, FeasibleSet::InfBall { center, radius }) => {
                check_dim(coef.len(), v.len())?;
                check_dim(center.len(), v.len())?;
                Ok(DVector::from_fn(v.len(), |i, _| {
                    ((v[i] - coef[i]) / g).clamp(center[i] - radius, center[i] + radius)
                }))
            }
            _ => prox(&self.base, 1.0 / g, &self.set, &(v / g)).map_err(|e| {
                Error::UnsupportedConjugate(format!(
                    "({}, sq_l2) over {:?}: {e}",
                    self.base, self.set
                ))
            }),
        }
    }
}

/// `(value, argmax)` of the grid maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMaximum {
    pub value: f64,
    pub argmax: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    /// Per-coordinate 1-D grids when everything is separable, full grid otherwise.
    Auto,
    /// Full tensor grid; dimension at most 2.
    Full,
}

/// Exhaustive maximization of `⟨u, v⟩ − φ(u) − γψ(u)` over a grid in `S`.
///
/// The grid covers `[-grid_radius, grid_radius]` per coordinate, which must
/// exceed `‖v‖_∞ / (γ μ_ψ) + 1`.
pub fn brute_force_conjugate(
    base: &ConvexAtom,
    regularizer: &ConvexAtom,
    gamma: f64,
    set: &FeasibleSet,
    v: &DVector<f64>,
    grid_radius: f64,
    grid_step: f64,
) -> Result<GridMaximum> {
    brute_force_conjugate_with(
        base,
        regularizer,
        gamma,
        set,
        v,
        grid_radius,
        grid_step,
        GridMode::Auto,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn brute_force_conjugate_with(
    base: &ConvexAtom,
    regularizer: &ConvexAtom,
    gamma: f64,
    set: &FeasibleSet,
    v: &DVector<f64>,
    grid_radius: f64,
    grid_step: f64,
    mode: GridMode,
) -> Result<GridMaximum> {
    let mu = regularizer.strong_convexity();
    if !(gamma > 0.0 && mu > 0.0) {
        return Err(Error::InvalidArgument(
            "grid oracle needs a strongly convex regularizer".into(),
        ));
    }
    if !(grid_step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "grid step must be positive, got {grid_step}"
        )));
    }
    let needed = v.amax() / (gamma * mu) + 1.0;
    if !(grid_radius > needed) {
        return Err(Error::InvalidArgument(format!(
            "grid radius {grid_radius} must exceed {needed}"
        )));
    }
    let dim = v.len();
    let separable = base.is_separable() && regularizer.is_separable() && set.is_separable();
    if mode == GridMode::Auto && separable {
        return Ok(coordinate_grids(
            base,
            regularizer,
            gamma,
            set,
            v,
            grid_radius,
            grid_step,
        ));
    }
    if dim == 0 || dim > 2 {
        return Err(Error::InvalidArgument(format!(
            "full grids support dimension 1 or 2, got {dim}"
        )));
    }
    full_grid(base, regularizer, gamma, set, v, grid_radius, grid_step)
}

fn axis(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> + Clone {
    let count = ((hi - lo) / step).floor() as usize;
    (0..=count).map(move |k| lo + k as f64 * step)
}

fn box_interval(set: &FeasibleSet, i: usize, r: f64) -> (f64, f64) {
    match set {
        FeasibleSet::InfBall { center, radius } => {
            ((center[i] - radius).max(-r), (center[i] + radius).min(r))
        }
        _ => (-r, r),
    }
}

fn coordinate_grids(
    base: &ConvexAtom,
    regularizer: &ConvexAtom,
    gamma: f64,
    set: &FeasibleSet,
    v: &DVector<f64>,
    r: f64,
    step: f64,
) -> GridMaximum {
    let mut argmax = DVector::zeros(v.len());
    let mut value = 0.0;
    for i in 0..v.len() {
        let (lo, hi) = box_interval(set, i, r);
        let mut grid: Vec<f64> = axis(lo, hi, step).collect();
        // The interval ends are feasible points the uniform grid may skip.
        grid.push(hi);
        let (best_t, best) = grid
            .par_iter()
            .map(|&t| {
                let f = t * v[i]
                    - coordinate_value(base, i, t)
                    - gamma * coordinate_value(regularizer, i, t);
                (t, f)
            })
            .reduce(
                || (0.0, f64::NEG_INFINITY),
                |a, b| if b.1 > a.1 { b } else { a },
            );
        argmax[i] = best_t;
        value += best;
    }
    GridMaximum { value, argmax }
}

fn full_grid(
    base: &ConvexAtom,
    regularizer: &ConvexAtom,
    gamma: f64,
    set: &FeasibleSet,
    v: &DVector<f64>,
    r: f64,
    step: f64,
) -> Result<GridMaximum> {
    let dim = v.len();
    let eval = |u: &DVector<f64>| -> f64 {
        let f = base.value(u).unwrap_or(f64::INFINITY)
            + gamma * regularizer.value(u).unwrap_or(f64::INFINITY);
        u.dot(v) - f
    };
    let simplex = matches!(set, FeasibleSet::Simplex)
        || matches!(
            base,
            ConvexAtom::Indicator {
                set: FeasibleSet::Simplex
            }
        );
    let best = if simplex {
        // Parametrize the simplex by its first `dim - 1` coordinates.
        let first: Vec<f64> = if dim == 1 {
            vec![1.0]
        } else {
            axis(0.0, 1.0, step).collect()
        };
        first
            .par_iter()
            .map(|&t| {
                let u = if dim == 1 {
                    DVector::from_element(1, 1.0)
                } else {
                    DVector::from_vec(vec![t, 1.0 - t])
                };
                let f = eval(&u);
                (u, f)
            })
            .reduce(
                || (DVector::zeros(dim), f64::NEG_INFINITY),
                |a, b| if b.1 > a.1 { b } else { a },
            )
    } else {
        let (lo0, hi0) = box_interval(set, 0, r);
        let rows: Vec<f64> = axis(lo0, hi0, step).chain(std::iter::once(hi0)).collect();
        rows.par_iter()
            .map(|&t0| {
                let mut u = DVector::zeros(dim);
                u[0] = t0;
                if dim == 1 {
                    let f = eval(&u);
                    return (u, f);
                }
                let (lo1, hi1) = box_interval(set, 1, r);
                let mut best = (u.clone(), f64::NEG_INFINITY);
                for t1 in axis(lo1, hi1, step).chain(std::iter::once(hi1)) {
                    u[1] = t1;
                    let f = eval(&u);
                    if f > best.1 {
                        best = (u.clone(), f);
                    }
                }
                best
            })
            .reduce(
                || (DVector::zeros(dim), f64::NEG_INFINITY),
                |a, b| if b.1 > a.1 { b } else { a },
            )
    };
    if !best.1.is_finite() {
        return Err(Error::InvalidArgument(
            "grid does not meet the feasible set".into(),
        ));
    }
    Ok(GridMaximum {
        value: best.1,
        argmax: best.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::{atom_l1, atom_linear, atom_zero};
    use nalgebra::dvector;

    fn l1_conj(gamma: f64) -> SmoothedConjugate {
        SmoothedConjugate::quadratic(atom_l1(), gamma, FeasibleSet::FullSpace).unwrap()
    }

    fn box_conj(b: DVector<f64>) -> SmoothedConjugate {
        let dim = b.len();
        SmoothedConjugate::quadratic(atom_linear(b), 1.0, FeasibleSet::unit_box(dim)).unwrap()
    }

    #[test]
    fn l1_closed_form() {
        let c = l1_conj(1.0);
        assert_eq!(c.value(&dvector![2.0]).unwrap(), 0.5);
        assert_eq!(c.value(&dvector![0.5]).unwrap(), 0.0);
        assert_eq!(c.grad(&dvector![2.0]).unwrap(), dvector![1.0]);
        assert_eq!(c.grad(&dvector![0.0]).unwrap(), dvector![0.0]);
        assert_eq!(c.smoothness_bound(), 1.0);
    }

    #[test]
    fn box_linear_closed_form() {
        let c = box_conj(dvector![0.0]);
        assert_eq!(c.value(&dvector![3.0]).unwrap(), 2.5);
        assert_eq!(c.grad(&dvector![3.0]).unwrap(), dvector![1.0]);
    }

    #[test]
    fn closed_forms_match_maximizer_objective() {
        let cases = [
            box_conj(dvector![0.5, -0.5]),
            SmoothedConjugate::quadratic(atom_l1(), 0.3, FeasibleSet::FullSpace).unwrap(),
        ];
        for c in &cases {
            for v in [dvector![3.0, -1.0], dvector![0.1, 0.2], dvector![-5.0, 4.0]] {
                let u = c.grad(&v).unwrap();
                let direct = c.inner_objective(&u, &v).unwrap();
                assert!((c.value(&v).unwrap() - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn prox_route_for_other_atoms() {
        // Huber base: maximizer is prox_{huber/γ}(v/γ).
        let c =
            SmoothedConjugate::quadratic(crate::atoms::atom_huber(), 1.0, FeasibleSet::FullSpace)
                .unwrap();
        let u = c.grad(&dvector![1.0]).unwrap();
        assert!((u[0] - 0.5).abs() < 1e-15);
        assert!((c.value(&dvector![1.0]).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_quadratic_regularizer_in_solver_path() {
        let c = SmoothedConjugate::new(atom_l1(), atom_l1(), 1.0, FeasibleSet::FullSpace);
        assert!(c.is_err(), "l1 is not strongly convex");
        let huber_reg = SmoothedConjugate {
            base: atom_l1(),
            regularizer: crate::atoms::atom_huber(),
            gamma: 1.0,
            set: FeasibleSet::FullSpace,
        };
        assert!(matches!(
            huber_reg.value(&dvector![1.0]),
            Err(Error::UnsupportedConjugate(_))
        ));
    }

    #[test]
    fn oracle_limits() {
        // φ ≡ 0, ψ = ½‖·‖²: value ‖v‖²/(2γ), argmax v/γ.
        let g = brute_force_conjugate(
            &atom_zero(),
            &ConvexAtom::SqL2,
            2.0,
            &FeasibleSet::FullSpace,
            &dvector![1.0, -0.5],
            2.0,
            1e-4,
        )
        .unwrap();
        assert!((g.value - 1.25 / 4.0).abs() < 1e-7);
        assert!((&g.argmax - dvector![0.5, -0.25]).amax() < 1e-4);

        let big = brute_force_conjugate(
            &atom_l1(),
            &ConvexAtom::SqL2,
            1e6,
            &FeasibleSet::FullSpace,
            &dvector![1.0],
            1.01,
            1e-5,
        )
        .unwrap();
        assert!(big.value <= 1e-5);
    }

    #[test]
    fn oracle_rejects_small_radius() {
        let r = brute_force_conjugate(
            &atom_l1(),
            &ConvexAtom::SqL2,
            1.0,
            &FeasibleSet::FullSpace,
            &dvector![3.0],
            4.0,
            1e-3,
        );
        assert!(r.is_err());
    }
}
