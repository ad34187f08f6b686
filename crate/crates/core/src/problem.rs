//! Consensus and coupled-constraints problems with quadratic regularization.
//!
//! Consensus: `min Σ f_i(y_i) + (λ/2)‖y_i‖²` over `x_i ∈ Q` with
//! `y_i = A_i x_i − b_i` and `x_1 = … = x_n`.
//!
//! Coupled: `min Σ f_i(x_i) + (λ/2)‖x_i‖²` over `x_i ∈ Q_i` with
//! `Σ (A_i x_i − b_i) = 0`.
//!
//! `mu` is the weight of the extra `½‖·‖²` term; it is applied on the dual
//! side by the dual transforms.

use nalgebra::{DMatrix, DVector};

use crate::atoms::{ConvexAtom, FeasibleSet};
use crate::error::{check_dim, Error, Result};
use crate::graph::GossipOperator;

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusProblem {
    pub atoms: Vec<ConvexAtom>,
    /// `rows_i × d`.
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DVector<f64>>,
    pub set: FeasibleSet,
    pub lambda: f64,
    pub mu: f64,
    pub gossip: GossipOperator,
}

impl ConsensusProblem {
    pub fn new(
        atoms: Vec<ConvexAtom>,
        a: Vec<DMatrix<f64>>,
        b: Vec<DVector<f64>>,
        set: FeasibleSet,
        lambda: f64,
        gossip: GossipOperator,
    ) -> Result<Self> {
        let n = gossip.n();
        check_dim(n, atoms.len())?;
        check_dim(n, a.len())?;
        check_dim(n, b.len())?;
        let d = a[0].ncols();
        for i in 0..n {
            check_dim(d, a[i].ncols())?;
            check_dim(a[i].nrows(), b[i].len())?;
            if let Some(k) = atoms[i].dimension() {
                check_dim(a[i].nrows(), k)?;
            }
        }
        if let Some(k) = set.dimension() {
            check_dim(d, k)?;
        }
        if !(lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be >= 0, got {lambda}"
            )));
        }
        Ok(ConsensusProblem {
            atoms,
            a,
            b,
            set,
            lambda,
            mu: 0.0,
            gossip,
        })
    }

    pub fn n(&self) -> usize {
        self.gossip.n()
    }

    /// Common column count of the `A_i`.
    pub fn d(&self) -> usize {
        self.a[0].ncols()
    }

    pub fn rows(&self, i: usize) -> usize {
        self.a[i].nrows()
    }

    /// `Σ f_i(A_i x_i − b_i) + (λ/2)‖A_i x_i − b_i‖²` for stacked `x`.
    pub fn objective(&self, x: &DVector<f64>) -> Result<f64> {
        let d = self.d();
        check_dim(self.n() * d, x.len())?;
        let mut total = 0.0;
        for i in 0..self.n() {
            let y = &self.a[i] * x.rows(i * d, d) - &self.b[i];
            total += self.atoms[i].value(&y)? + 0.5 * self.lambda * y.norm_squared();
        }
        Ok(total)
    }

    /// `‖(W ⊗ I_d) x‖`.
    pub fn consensus_residual(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.gossip.lift_apply(x, self.d())?.norm())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledProblem {
    pub atoms: Vec<ConvexAtom>,
    /// `p × d_i`.
    pub a: Vec<DMatrix<f64>>,
    /// Length `p`.
    pub b: Vec<DVector<f64>>,
    pub sets: Vec<FeasibleSet>,
    pub lambda: f64,
    pub mu: f64,
    pub gossip: GossipOperator,
}

impl CoupledProblem {
    pub fn new(
        atoms: Vec<ConvexAtom>,
        a: Vec<DMatrix<f64>>,
        b: Vec<DVector<f64>>,
        sets: Vec<FeasibleSet>,
        lambda: f64,
        gossip: GossipOperator,
    ) -> Result<Self> {
        let n = gossip.n();
        check_dim(n, atoms.len())?;
        check_dim(n, a.len())?;
        check_dim(n, b.len())?;
        check_dim(n, sets.len())?;
        let p = a[0].nrows();
        for i in 0..n {
            check_dim(p, a[i].nrows())?;
            check_dim(p, b[i].len())?;
            if let Some(k) = atoms[i].dimension() {
                check_dim(a[i].ncols(), k)?;
            }
            if let Some(k) = sets[i].dimension() {
                check_dim(a[i].ncols(), k)?;
            }
        }
        if !(lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be >= 0, got {lambda}"
            )));
        }
        Ok(CoupledProblem {
            atoms,
            a,
            b,
            sets,
            lambda,
            mu: 0.0,
            gossip,
        })
    }

    pub fn n(&self) -> usize {
        self.gossip.n()
    }

    /// Common row count `p` of the `A_i`.
    pub fn p(&self) -> usize {
        self.a[0].nrows()
    }

    pub fn local_dims(&self) -> Vec<usize> {
        self.a.iter().map(|a| a.ncols()).collect()
    }

    pub fn split<'a>(&self, x: &'a DVector<f64>) -> Result<Vec<nalgebra::DVectorView<'a, f64>>> {
        let dims = self.local_dims();
        check_dim(dims.iter().sum(), x.len())?;
        let mut out = Vec::with_capacity(dims.len());
        let mut off = 0;
        for d in dims {
            out.push(x.rows(off, d));
            off += d;
        }
        Ok(out)
    }

    /// `Σ f_i(x_i) + (λ/2)‖x_i‖²` for stacked `x`.
    pub fn objective(&self, x: &DVector<f64>) -> Result<f64> {
        let mut total = 0.0;
        for (i, xi) in self.split(x)?.into_iter().enumerate() {
            let xi = xi.into_owned();
            total += self.atoms[i].value(&xi)? + 0.5 * self.lambda * xi.norm_squared();
        }
        Ok(total)
    }

    /// `Σ (A_i x_i − b_i)`.
    pub fn coupling_residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut r = DVector::zeros(self.p());
        for (i, xi) in self.split(x)?.into_iter().enumerate() {
            r += &self.a[i] * xi - &self.b[i];
        }
        Ok(r)
    }

    /// Concatenated `[A_1 … A_n]`.
    pub fn stacked_matrix(&self) -> DMatrix<f64> {
        let cols: usize = self.local_dims().iter().sum();
        let mut m = DMatrix::zeros(self.p(), cols);
        let mut off = 0;
        for a in &self.a {
            m.columns_mut(off, a.ncols()).copy_from(a);
            off += a.ncols();
        }
        m
    }

    pub fn total_rhs(&self) -> DVector<f64> {
        self.b
            .iter()
            .fold(DVector::zeros(self.p()), |acc, b| acc + b)
    }
}
