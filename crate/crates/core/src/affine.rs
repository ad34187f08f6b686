//! Smooth strongly convex minimization under an affine constraint,
//! `min P(u) s.t. K u = c`, the form consumed by the solver.
//!
//! Objectives built from the dual transforms are block separable over the
//! network nodes and their constraint operators are "network" operators: one
//! gossip product plus purely local maps. That structure is kept explicit so
//! the simulator can execute them node by node.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::conjugate::SmoothedConjugate;
use crate::error::{check_dim, Error, Result};
use crate::graph::{spectral_constants, GossipOperator, SpectralConstants};

/// Relative least-squares residual allowed for `c ∈ image(K)`.
pub const RHS_IMAGE_TOL: f64 = 1e-9;

/// `½ uᵀ H u + gᵀ u + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
}

impl QuadraticObjective {
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>) -> Result<Self> {
        if !hessian.is_square() {
            return Err(Error::InvalidArgument("hessian must be square".into()));
        }
        check_dim(hessian.nrows(), linear.len())?;
        Ok(QuadraticObjective {
            hessian,
            linear,
            constant: 0.0,
        })
    }

    fn value(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.hessian * u)) + self.linear.dot(u) + self.constant
    }

    fn gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.hessian * u + &self.linear
    }

    /// `(λ_max, λ_min)` of the symmetrized Hessian, negative parts clipped.
    fn curvature(&self) -> (f64, f64) {
        let sym = (&self.hessian + self.hessian.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym).eigenvalues;
        let l = eig.max().max(0.0);
        let mut mu = eig.min().max(0.0);
        if mu <= 1e-12 * l {
            mu = 0.0;
        }
        (l, mu)
    }

    /// Unconstrained minimum, when it is finite.
    fn minimum(&self) -> Option<f64> {
        let sym = (&self.hessian + self.hessian.transpose()) * 0.5;
        let pinv = sym.clone().pseudo_inverse(1e-12).ok()?;
        let u = -(&pinv * &self.linear);
        let stationarity = (&sym * &u + &self.linear).norm();
        if stationarity > 1e-9 * (1.0 + self.linear.norm()) {
            return None;
        }
        Some(self.value(&u))
    }
}

/// One node's share of a separable dual objective.
///
/// With the node block split as `(active, rest)`:
/// `value = conj(M · active) + ⟨linear, active⟩`, where `M` defaults to the
/// identity and `rest` does not enter the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTerm {
    pub map: Option<DMatrix<f64>>,
    pub conj: SmoothedConjugate,
    pub linear: DVector<f64>,
    pub active_dim: usize,
    pub block_dim: usize,
}

impl LocalTerm {
    pub fn new(
        map: Option<DMatrix<f64>>,
        conj: SmoothedConjugate,
        linear: DVector<f64>,
        block_dim: usize,
    ) -> Result<Self> {
        let active_dim = linear.len();
        if active_dim > block_dim {
            return Err(Error::InvalidArgument(format!(
                "active dimension {active_dim} exceeds block dimension {block_dim}"
            )));
        }
        if let Some(m) = &map {
            check_dim(active_dim, m.ncols())?;
        }
        let term = LocalTerm {
            map,
            conj,
            linear,
            active_dim,
            block_dim,
        };
        // Surface unsupported conjugates at build time rather than mid-solve.
        term.value(&DVector::zeros(block_dim))?;
        Ok(term)
    }

    fn argument(&self, block: &DVector<f64>) -> DVector<f64> {
        let active = block.rows(0, self.active_dim);
        match &self.map {
            Some(m) => m * active,
            None => active.into_owned(),
        }
    }

    pub fn value(&self, block: &DVector<f64>) -> Result<f64> {
        check_dim(self.block_dim, block.len())?;
        let v = self.argument(block);
        Ok(self.conj.value(&v)? + self.linear.dot(&block.rows(0, self.active_dim)))
    }

    pub fn gradient(&self, block: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.block_dim, block.len())?;
        let v = self.argument(block);
        let inner = self.conj.grad(&v)?;
        let active = match &self.map {
            Some(m) => m.tr_mul(&inner),
            None => inner,
        } + &self.linear;
        let mut g = DVector::zeros(self.block_dim);
        g.rows_mut(0, self.active_dim).copy_from(&active);
        Ok(g)
    }

    /// The conjugate maximizer at this block: the locally recovered primal.
    pub fn maximizer(&self, block: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.block_dim, block.len())?;
        self.conj.grad(&self.argument(block))
    }

    pub fn smoothness(&self) -> f64 {
        let scale = match &self.map {
            Some(m) if m.nrows() > 0 && m.ncols() > 0 => {
                SymmetricEigen::new(m.tr_mul(m)).eigenvalues.max().max(0.0)
            }
            Some(_) => 0.0,
            None => 1.0,
        };
        scale * self.conj.smoothness_bound()
    }
}

/// Block-separable objective in node-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableObjective {
    terms: Vec<LocalTerm>,
    offsets: Vec<usize>,
}

impl SeparableObjective {
    pub fn new(terms: Vec<LocalTerm>) -> Self {
        let mut offsets = Vec::with_capacity(terms.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for t in &terms {
            acc += t.block_dim;
            offsets.push(acc);
        }
        SeparableObjective { terms, offsets }
    }

    pub fn terms(&self) -> &[LocalTerm] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn block<'a>(&self, u: &'a DVector<f64>, i: usize) -> nalgebra::DVectorView<'a, f64> {
        u.rows(self.offsets[i], self.terms[i].block_dim)
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Quadratic(QuadraticObjective),
    Separable(SeparableObjective),
}

impl Objective {
    pub fn dim(&self) -> usize {
        match self {
            Objective::Quadratic(q) => q.linear.len(),
            Objective::Separable(s) => s.dim(),
        }
    }

    pub fn value(&self, u: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), u.len())?;
        match self {
            Objective::Quadratic(q) => Ok(q.value(u)),
            Objective::Separable(s) => {
                let mut total = 0.0;
                for (i, t) in s.terms.iter().enumerate() {
                    total += t.value(&s.block(u, i).into_owned())?;
                }
                Ok(total)
            }
        }
    }

    pub fn gradient(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), u.len())?;
        match self {
            Objective::Quadratic(q) => Ok(q.gradient(u)),
            Objective::Separable(s) => {
                let mut g = DVector::zeros(u.len());
                for (i, t) in s.terms.iter().enumerate() {
                    let gi = t.gradient(&s.block(u, i).into_owned())?;
                    g.rows_mut(s.offsets[i], t.block_dim).copy_from(&gi);
                }
                Ok(g)
            }
        }
    }

    /// `(L, μ)`: gradient Lipschitz constant and strong convexity modulus.
    pub fn curvature(&self) -> (f64, f64) {
        match self {
            Objective::Quadratic(q) => q.curvature(),
            Objective::Separable(s) => {
                let l = s
                    .terms
                    .iter()
                    .map(LocalTerm::smoothness)
                    .fold(0.0, f64::max);
                (l, 0.0)
            }
        }
    }

    /// Unconstrained infimum, where it is cheaply available.
    pub fn lower_bound(&self) -> Option<f64> {
        match self {
            Objective::Quadratic(q) => q.minimum(),
            Objective::Separable(_) => None,
        }
    }
}

/// Constraint operator that is one gossip product plus node-local maps.
///
/// Node block `i` is `(lead_i, g_i)` with `g_i ∈ R^q`. Row block `i` of `K` is
/// `local_i · lead_i + Σ_j W_ij g_j`, so `K` costs one gossip round and so
/// does `Kᵀ`, whose block `i` is `(local_iᵀ r_i, Σ_j W_ij r_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOperator {
    gossip: GossipOperator,
    gossip_dim: usize,
    lead_dims: Vec<usize>,
    local: Vec<Option<DMatrix<f64>>>,
    offsets: Vec<usize>,
}

impl NetworkOperator {
    /// `K = W ⊗ I_q` on `n` blocks of size `q`.
    pub fn consensus(gossip: GossipOperator, q: usize) -> Self {
        let n = gossip.n();
        Self::with_local(gossip, q, vec![None; n]).expect("consistent by construction")
    }

    /// `local[i]` is `q × lead_i`, or `None` for `lead_i = 0`.
    pub fn with_local(
        gossip: GossipOperator,
        q: usize,
        local: Vec<Option<DMatrix<f64>>>,
    ) -> Result<Self> {
        check_dim(gossip.n(), local.len())?;
        let mut lead_dims = Vec::with_capacity(local.len());
        for m in &local {
            match m {
                Some(m) => {
                    check_dim(q, m.nrows())?;
                    lead_dims.push(m.ncols());
                }
                None => lead_dims.push(0),
            }
        }
        let mut offsets = vec![0];
        for &l in &lead_dims {
            offsets.push(offsets.last().unwrap() + l + q);
        }
        Ok(NetworkOperator {
            gossip,
            gossip_dim: q,
            lead_dims,
            local,
            offsets,
        })
    }

    pub fn gossip(&self) -> &GossipOperator {
        &self.gossip
    }

    pub fn gossip_dim(&self) -> usize {
        self.gossip_dim
    }

    pub fn lead_dims(&self) -> &[usize] {
        &self.lead_dims
    }

    pub fn local_maps(&self) -> &[Option<DMatrix<f64>>] {
        &self.local
    }

    pub fn block_dim(&self, i: usize) -> usize {
        self.lead_dims[i] + self.gossip_dim
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    fn cols(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn rows(&self) -> usize {
        self.gossip.n() * self.gossip_dim
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.gossip.n();
        let q = self.gossip_dim;
        let mut g = DVector::zeros(n * q);
        for i in 0..n {
            let start = self.offsets[i] + self.lead_dims[i];
            g.rows_mut(i * q, q).copy_from(&x.rows(start, q));
        }
        let mut y = self.gossip.lift_apply(&g, q).expect("block sizes match");
        for i in 0..n {
            if let Some(m) = &self.local[i] {
                let lead = x.rows(self.offsets[i], self.lead_dims[i]);
                let mut yi = y.rows_mut(i * q, q);
                yi += m * lead;
            }
        }
        y
    }

    fn apply_transpose(&self, r: &DVector<f64>) -> DVector<f64> {
        let n = self.gossip.n();
        let q = self.gossip_dim;
        // W is symmetric, so the gossip part of Kᵀ is the same product.
        let wr = self.gossip.lift_apply(r, q).expect("block sizes match");
        let mut out = DVector::zeros(self.cols());
        for i in 0..n {
            let off = self.offsets[i];
            if let Some(m) = &self.local[i] {
                out.rows_mut(off, self.lead_dims[i])
                    .copy_from(&m.tr_mul(&r.rows(i * q, q)));
            }
            out.rows_mut(off + self.lead_dims[i], q)
                .copy_from(&wr.rows(i * q, q));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintOperator {
    Dense(DMatrix<f64>),
    Network(NetworkOperator),
}

impl ConstraintOperator {
    pub fn rows(&self) -> usize {
        match self {
            ConstraintOperator::Dense(k) => k.nrows(),
            ConstraintOperator::Network(k) => k.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            ConstraintOperator::Dense(k) => k.ncols(),
            ConstraintOperator::Network(k) => k.cols(),
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            ConstraintOperator::Dense(k) => k * x,
            ConstraintOperator::Network(k) => k.apply(x),
        }
    }

    pub fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            ConstraintOperator::Dense(k) => k.tr_mul(y),
            ConstraintOperator::Network(k) => k.apply_transpose(y),
        }
    }

    /// Gossip rounds consumed by one application of `K` or `Kᵀ`.
    pub fn rounds_per_application(&self) -> usize {
        match self {
            ConstraintOperator::Dense(_) => 0,
            ConstraintOperator::Network(_) => 1,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            ConstraintOperator::Dense(k) => k.clone(),
            ConstraintOperator::Network(k) => {
                let cols = k.cols();
                let mut dense = DMatrix::zeros(k.rows(), cols);
                let mut e = DVector::zeros(cols);
                for j in 0..cols {
                    e[j] = 1.0;
                    dense.set_column(j, &k.apply(&e));
                    e[j] = 0.0;
                }
                dense
            }
        }
    }
}

/// `(μ/2)‖u − anchor‖² + offset`, the proximal regularization term.
#[derive(Debug, Clone, PartialEq)]
pub struct Tikhonov {
    pub mu: f64,
    pub anchor: DVector<f64>,
    pub offset: f64,
}

impl Tikhonov {
    fn value(&self, u: &DVector<f64>) -> f64 {
        0.5 * self.mu * (u - &self.anchor).norm_squared() + self.offset
    }

    /// Sum of two terms, written again as one term.
    fn combine(&self, mu: f64, anchor: &DVector<f64>) -> Tikhonov {
        let total = self.mu + mu;
        let center = (&self.anchor * self.mu + anchor * mu) / total;
        let offset =
            self.offset + 0.5 * self.mu * mu / total * (&self.anchor - anchor).norm_squared();
        Tikhonov {
            mu: total,
            anchor: center,
            offset,
        }
    }
}

/// `min P(u) s.t. K u = c` with known curvature and constraint spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstrainedProblem {
    objective: Objective,
    constraint: ConstraintOperator,
    rhs: DVector<f64>,
    tikhonov: Option<Tikhonov>,
    smoothness: f64,
    strong_convexity: f64,
    k_spectrum: SpectralConstants,
    inner_tolerance: Option<f64>,
    gap_bound: Option<f64>,
}

impl AffineConstrainedProblem {
    pub fn new(
        objective: Objective,
        constraint: ConstraintOperator,
        rhs: DVector<f64>,
    ) -> Result<Self> {
        check_dim(objective.dim(), constraint.cols())?;
        check_dim(constraint.rows(), rhs.len())?;
        let dense = constraint.to_dense();
        let k_spectrum = gram_spectrum(&dense)?;
        let residual = image_residual(&dense, &rhs);
        if residual > RHS_IMAGE_TOL * rhs.norm() {
            return Err(Error::InfeasibleRhs { residual });
        }
        let (smoothness, strong_convexity) = objective.curvature();
        Ok(AffineConstrainedProblem {
            objective,
            constraint,
            rhs,
            tikhonov: None,
            smoothness,
            strong_convexity,
            k_spectrum,
            inner_tolerance: None,
            gap_bound: None,
        })
    }

    /// Replaces the computed `(L_P, μ_P)`.
    pub fn with_curvature(mut self, smoothness: f64, strong_convexity: f64) -> Result<Self> {
        if !(smoothness >= strong_convexity && strong_convexity >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need L_P >= mu_P >= 0, got ({smoothness}, {strong_convexity})"
            )));
        }
        self.smoothness = smoothness;
        self.strong_convexity = strong_convexity;
        Ok(self)
    }

    /// Adds `(μ/2)‖u − anchor‖²`, raising both curvature constants by `μ`.
    pub fn with_tikhonov(mut self, mu: f64, anchor: &DVector<f64>) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "regularization weight must be >= 0, got {mu}"
            )));
        }
        check_dim(self.dim(), anchor.len())?;
        if mu == 0.0 {
            return Ok(self);
        }
        self.tikhonov = Some(match &self.tikhonov {
            Some(t) => t.combine(mu, anchor),
            None => Tikhonov {
                mu,
                anchor: anchor.clone(),
                offset: 0.0,
            },
        });
        self.smoothness += mu;
        self.strong_convexity = self.strong_convexity.max(0.0) + mu;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn constraint(&self) -> &ConstraintOperator {
        &self.constraint
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    pub fn tikhonov(&self) -> Option<&Tikhonov> {
        self.tikhonov.as_ref()
    }

    /// `L_P`.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    /// `μ_P`.
    pub fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    /// `λ_max(KᵀK)` and `λ_min⁺(KᵀK)`.
    pub fn k_spectrum(&self) -> SpectralConstants {
        self.k_spectrum
    }

    /// Target `‖û − u*_μ‖²` recorded by [`regularize`].
    pub fn inner_tolerance(&self) -> Option<f64> {
        self.inner_tolerance
    }

    pub fn gap_bound(&self) -> Option<f64> {
        self.gap_bound
    }

    pub fn value(&self, u: &DVector<f64>) -> Result<f64> {
        let base = self.objective.value(u)?;
        Ok(base + self.tikhonov.as_ref().map_or(0.0, |t| t.value(u)))
    }

    /// Objective without the regularization term.
    pub fn base_value(&self, u: &DVector<f64>) -> Result<f64> {
        self.objective.value(u)
    }

    pub fn gradient(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let mut g = self.objective.gradient(u)?;
        if let Some(t) = &self.tikhonov {
            g += (u - &t.anchor) * t.mu;
        }
        Ok(g)
    }

    pub fn apply_k(&self, u: &DVector<f64>) -> DVector<f64> {
        self.constraint.apply(u)
    }

    pub fn apply_kt(&self, y: &DVector<f64>) -> DVector<f64> {
        self.constraint.apply_transpose(y)
    }

    /// `K u − c`.
    pub fn residual(&self, u: &DVector<f64>) -> DVector<f64> {
        self.constraint.apply(u) - &self.rhs
    }

    pub fn network(&self) -> Option<&NetworkOperator> {
        match &self.constraint {
            ConstraintOperator::Network(k) => Some(k),
            ConstraintOperator::Dense(_) => None,
        }
    }
}

/// Adds `(μ/2)‖u − anchor‖²` with `μ = ε / R²`.
///
/// The result has `μ_P + μ` and `L_P + μ`, and records the inner accuracy
/// `δ = ε² / (64 (L_P + μ) max(M̂, 1))` for `‖û − u*_μ‖²`. `gap_bound` is the
/// caller's `M̂`; by default it is `P(anchor)` minus the objective's lower
/// bound when one is known, and `1` otherwise.
pub fn regularize(
    p: &AffineConstrainedProblem,
    eps: f64,
    radius: f64,
    anchor: &DVector<f64>,
    gap_bound: Option<f64>,
) -> Result<AffineConstrainedProblem> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "radius must be positive, got {radius}"
        )));
    }
    check_dim(p.dim(), anchor.len())?;
    let mu = eps / (radius * radius);
    let m_hat = match gap_bound {
        Some(m) => m,
        None => match p.objective.lower_bound() {
            Some(lb) => (p.value(anchor)? - lb).max(0.0),
            None => 1.0,
        },
    };
    let mut out = p.clone().with_tikhonov(mu, anchor)?;
    out.inner_tolerance = Some(eps * eps / (64.0 * out.smoothness * m_hat.max(1.0)));
    out.gap_bound = Some(m_hat);
    Ok(out)
}

/// Spectrum of `KᵀK` through the smaller of the two Gram matrices.
pub fn gram_spectrum(k: &DMatrix<f64>) -> Result<SpectralConstants> {
    let gram = if k.nrows() <= k.ncols() {
        k * k.transpose()
    } else {
        k.tr_mul(k)
    };
    spectral_constants(&gram)
}

/// `‖c − K K⁺ c‖`.
pub fn image_residual(k: &DMatrix<f64>, c: &DVector<f64>) -> f64 {
    if c.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let svd = k.clone().svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    match svd.solve(c, tol) {
        Ok(x) => (k * x - c).norm(),
        Err(_) => c.norm(),
    }
}
