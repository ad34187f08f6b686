//! Dual transforms turning consensus and coupled problems into
//! [`AffineConstrainedProblem`]s, plus primal recovery.
//!
//! Variable layouts, node-major throughout:
//!
//! * coupled dual: block `i` is `z_i ∈ R^p`, `K = W ⊗ I_p`, `c = 0`;
//! * consensus dual: block `i` is `(z_i ∈ R^{rows_i}, u_i ∈ R^d)`,
//!   `K(z, u) = 𝐀ᵀz + 𝐖u`, `c = 0`;
//! * Huber basis pursuit: block `i` is `(w_i ∈ R^{d_i}, u_i ∈ R^p)`,
//!   `K(w, u) = 𝐀w + 𝐖u`, `c = 𝐛`;
//! * Huber consensus regression: block `i` is `x_i ∈ R^d`, `K = W ⊗ I_d`.

use nalgebra::{DMatrix, DVector};

use crate::affine::{
    AffineConstrainedProblem, ConstraintOperator, LocalTerm, NetworkOperator, Objective,
    SeparableObjective,
};
use crate::atoms::{atom_linear, ConvexAtom, FeasibleSet};
use crate::conjugate::SmoothedConjugate;
use crate::error::{check_dim, Error, Result};
use crate::graph::{spectral_constants, SpectralConstants};
use crate::problem::{ConsensusProblem, CoupledProblem};

/// `L_A = max_i λ_max(A_i A_iᵀ)`, `μ_A = λ_min⁺((1/n) Σ A_i A_iᵀ)`.
pub fn constraint_constants(a: &[DMatrix<f64>]) -> Result<SpectralConstants> {
    let first = a
        .first()
        .ok_or_else(|| Error::InvalidArgument("no matrices given".into()))?;
    let rows = first.nrows();
    let mut mean = DMatrix::zeros(rows, rows);
    let mut l: f64 = 0.0;
    for ai in a {
        check_dim(rows, ai.nrows())?;
        let g = ai * ai.transpose();
        if rows > 0 {
            l = l.max(nalgebra::SymmetricEigen::new(g.clone()).eigenvalues.max());
        }
        mean += g;
    }
    mean /= a.len() as f64;
    let mu = spectral_constants(&mean)?.mu;
    if !(l > 0.0) {
        return Err(Error::NoPositiveEigenvalue);
    }
    Ok(SpectralConstants {
        l,
        mu,
        kappa: l / mu,
    })
}

fn require_smoothing(lambda: f64) -> Result<()> {
    if lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "lambda = {lambda}: the dual is not smooth; regularize the primal first"
        )))
    }
}

fn finish(
    terms: Vec<LocalTerm>,
    op: NetworkOperator,
    rhs: DVector<f64>,
    mu: f64,
) -> Result<AffineConstrainedProblem> {
    let objective = Objective::Separable(SeparableObjective::new(terms));
    let dim = objective.dim();
    AffineConstrainedProblem::new(objective, ConstraintOperator::Network(op), rhs)?
        .with_tikhonov(mu, &DVector::zeros(dim))
}

/// `min Σ conj_i(A_iᵀ z_i) − ⟨z_i, b_i⟩ s.t. (W ⊗ I_p) z = 0`, where
/// `conj_i(v) = max_{x ∈ Q_i} ⟨x, v⟩ − f_i(x) − (λ/2)‖x‖²`.
pub fn dualize_coupled(p: &CoupledProblem) -> Result<AffineConstrainedProblem> {
    require_smoothing(p.lambda)?;
    let dim_p = p.p();
    let mut terms = Vec::with_capacity(p.n());
    for i in 0..p.n() {
        let conj = SmoothedConjugate::quadratic(p.atoms[i].clone(), p.lambda, p.sets[i].clone())?;
        terms.push(LocalTerm::new(
            Some(p.a[i].transpose()),
            conj,
            -&p.b[i],
            dim_p,
        )?);
    }
    let op = NetworkOperator::consensus(p.gossip.clone(), dim_p);
    finish(terms, op, DVector::zeros(p.n() * dim_p), p.mu)
}

/// `min Σ conj_i(z_i) + ⟨z_i, b_i⟩ s.t. 𝐀ᵀz + 𝐖u = 0`, where
/// `conj_i(v) = max_y ⟨y, v⟩ − f_i(y) − (λ/2)‖y‖²`.
///
/// Requires `Q` to be the full space.
pub fn dualize_consensus(p: &ConsensusProblem) -> Result<AffineConstrainedProblem> {
    require_smoothing(p.lambda)?;
    if p.set != FeasibleSet::FullSpace {
        return Err(Error::UnsupportedConjugate(
            "consensus dual requires an unconstrained primal variable".into(),
        ));
    }
    let d = p.d();
    let mut terms = Vec::with_capacity(p.n());
    let mut local = Vec::with_capacity(p.n());
    for i in 0..p.n() {
        let conj =
            SmoothedConjugate::quadratic(p.atoms[i].clone(), p.lambda, FeasibleSet::FullSpace)?;
        terms.push(LocalTerm::new(None, conj, p.b[i].clone(), p.rows(i) + d)?);
        local.push(Some(p.a[i].transpose()));
    }
    let op = NetworkOperator::with_local(p.gossip.clone(), d, local)?;
    finish(terms, op, DVector::zeros(p.n() * d), p.mu)
}

fn require_l1(atoms: &[ConvexAtom]) -> Result<()> {
    match atoms.iter().find(|a| **a != ConvexAtom::L1) {
        None => Ok(()),
        Some(a) => Err(Error::UnsupportedAtom(format!(
            "double dual needs l1 atoms, got {}",
            a.name()
        ))),
    }
}

/// Huber basis pursuit, `min Σ h_λ(w_i) s.t. A_i w_i + (𝐖u)_i = b_i`.
///
/// `h_λ(t) = t²/(2λ)` for `|t| ≤ λ` and `|t| − λ/2` beyond, the smoothed
/// conjugate of the box indicator. Summing the constraint over nodes gives
/// `Σ A_i w_i = Σ b_i`, so this is basis pursuit with the 1-norm replaced by
/// its Huber smoothing.
pub fn double_dual_basis_pursuit(p: &CoupledProblem) -> Result<AffineConstrainedProblem> {
    require_smoothing(p.lambda)?;
    require_l1(&p.atoms)?;
    if p.sets.iter().any(|s| *s != FeasibleSet::FullSpace) {
        return Err(Error::UnsupportedConjugate(
            "double dual requires unconstrained primal blocks".into(),
        ));
    }
    let dim_p = p.p();
    let mut terms = Vec::with_capacity(p.n());
    let mut local = Vec::with_capacity(p.n());
    let mut rhs = DVector::zeros(p.n() * dim_p);
    for i in 0..p.n() {
        let di = p.a[i].ncols();
        let conj = SmoothedConjugate::quadratic(
            atom_linear(DVector::zeros(di)),
            p.lambda,
            FeasibleSet::unit_box(di),
        )?;
        terms.push(LocalTerm::new(None, conj, DVector::zeros(di), di + dim_p)?);
        local.push(Some(p.a[i].clone()));
        rhs.rows_mut(i * dim_p, dim_p).copy_from(&p.b[i]);
    }
    let op = NetworkOperator::with_local(p.gossip.clone(), dim_p, local)?;
    finish(terms, op, rhs, p.mu)
}

/// Huber consensus regression, `min Σ h_λ(A_i x_i − b_i) s.t. (W ⊗ I_d) x = 0`.
pub fn double_dual_mse(p: &ConsensusProblem) -> Result<AffineConstrainedProblem> {
    require_smoothing(p.lambda)?;
    require_l1(&p.atoms)?;
    if p.set != FeasibleSet::FullSpace {
        return Err(Error::UnsupportedConjugate(
            "double dual requires an unconstrained primal variable".into(),
        ));
    }
    let d = p.d();
    let mut terms = Vec::with_capacity(p.n());
    for i in 0..p.n() {
        let rows = p.rows(i);
        let conj = SmoothedConjugate::quadratic(
            atom_linear(p.b[i].clone()),
            p.lambda,
            FeasibleSet::unit_box(rows),
        )?;
        terms.push(LocalTerm::new(
            Some(p.a[i].clone()),
            conj,
            DVector::zeros(d),
            d,
        )?);
    }
    let op = NetworkOperator::consensus(p.gossip.clone(), d);
    finish(terms, op, DVector::zeros(p.n() * d), p.mu)
}

/// `x_i = argmax_{x ∈ Q_i} ⟨A_iᵀ z_i, x⟩ − f_i(x) − (λ/2)‖x‖²`.
pub fn recover_primal_coupled(p: &CoupledProblem, z: &DVector<f64>) -> Result<DVector<f64>> {
    require_smoothing(p.lambda)?;
    let dim_p = p.p();
    check_dim(p.n() * dim_p, z.len())?;
    let mut out = Vec::new();
    for i in 0..p.n() {
        let conj = SmoothedConjugate::quadratic(p.atoms[i].clone(), p.lambda, p.sets[i].clone())?;
        let v = p.a[i].tr_mul(&z.rows(i * dim_p, dim_p));
        out.extend(conj.grad(&v)?.iter().copied());
    }
    Ok(DVector::from_vec(out))
}

/// Primal iterate of the consensus problem from the solver's constraint
/// multiplier `y ∈ R^{nd}` for `𝐀ᵀz + 𝐖u = 0`: `x = −y`.
///
/// Stationarity in `u` gives `𝐖x = 0` and stationarity in `z` gives
/// `∇conj_i(z_i) = A_i x_i − b_i` (up to the dual regularization).
pub fn recover_primal_consensus(
    p: &ConsensusProblem,
    multiplier: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dim(p.n() * p.d(), multiplier.len())?;
    Ok(-multiplier)
}

/// `y_i = ∇conj_i(z_i)`, the residual blocks `A_i x_i − b_i` implied by a
/// consensus dual point in the `(z_i, u_i)` layout.
pub fn recover_residuals_consensus(
    p: &ConsensusProblem,
    zu: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    require_smoothing(p.lambda)?;
    let d = p.d();
    let total: usize = (0..p.n()).map(|i| p.rows(i) + d).sum();
    check_dim(total, zu.len())?;
    let mut out = Vec::with_capacity(p.n());
    let mut off = 0;
    for i in 0..p.n() {
        let rows = p.rows(i);
        let conj =
            SmoothedConjugate::quadratic(p.atoms[i].clone(), p.lambda, FeasibleSet::FullSpace)?;
        out.push(conj.grad(&zu.rows(off, rows).into_owned())?);
        off += rows + d;
    }
    Ok(out)
}

/// Extracts the `z_i` parts of a consensus dual point, stacked.
pub fn consensus_dual_z(p: &ConsensusProblem, zu: &DVector<f64>) -> Result<DVector<f64>> {
    let d = p.d();
    let total: usize = (0..p.n()).map(|i| p.rows(i) + d).sum();
    check_dim(total, zu.len())?;
    let mut out = Vec::new();
    let mut off = 0;
    for i in 0..p.n() {
        out.extend(zu.rows(off, p.rows(i)).iter().copied());
        off += p.rows(i) + d;
    }
    Ok(DVector::from_vec(out))
}

/// Splits a Huber basis pursuit point into the stacked `w` blocks.
pub fn basis_pursuit_dd_primal(p: &CoupledProblem, wu: &DVector<f64>) -> Result<DVector<f64>> {
    let dim_p = p.p();
    let dims = p.local_dims();
    check_dim(dims.iter().sum::<usize>() + p.n() * dim_p, wu.len())?;
    let mut out = Vec::new();
    let mut off = 0;
    for di in dims {
        out.extend(wu.rows(off, di).iter().copied());
        off += di + dim_p;
    }
    Ok(DVector::from_vec(out))
}
