//! Communication graphs and gossip matrices.
//!
//! A gossip matrix `W` for a connected undirected graph is symmetric positive
//! semi-definite, vanishes off the edge set (diagonal excepted) and has the
//! consensus line `span(1)` as its exact kernel. The graph Laplacian `D - A` is
//! the default choice. Stacked vectors of `n` blocks of size `d` are multiplied
//! by the lift `W ⊗ I_d` blockwise, never materializing the Kronecker product.
//!
//! Node ids are 0-based in memory. The edge-list text format is 1-based:
//!
//! ```text
//! n 3
//! 1 2
//! 2 3
//! ```

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Eigenvalues below `ZERO_EIGEN_CUTOFF * L_W` count as zero.
pub const ZERO_EIGEN_CUTOFF: f64 = 1e-10;

/// Relative eigenvalue tolerance used by [`validate_gossip`].
pub const VALIDATION_TOL: f64 = 1e-9;

/// Connected undirected simple graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    /// Normalized `(i, j)` with `i < j`, sorted.
    edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "graph needs at least one node".into(),
            ));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a}, {b}) out of range for n = {n}"
                )));
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop at node {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !set.insert(e) {
                return Err(Error::InvalidArgument(format!("duplicate edge {e:?}")));
            }
        }
        let g = Graph {
            n,
            edges: set.into_iter().collect(),
        };
        if !g.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i.min(j), i.max(j))).is_ok()
    }

    /// Sorted neighbor lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    fn is_connected(&self) -> bool {
        connected(self.n, &self.edges)
    }

    /// Edge-list text with a `n <count>` header and 1-based `i j` lines.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n {}\n", self.n);
        for &(a, b) in &self.edges {
            out.push_str(&format!("{} {}\n", a + 1, b + 1));
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty edge list".into()))?;
        let n = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["n", count] => count
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("bad node count {count:?}: {e}")))?,
            _ => {
                return Err(Error::Parse(format!(
                    "expected `n <count>` header, got {header:?}"
                )))
            }
        };
        let mut edges = Vec::new();
        for line in lines {
            let ids: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("bad edge line {line:?}: {e}")))?;
            match ids.as_slice() {
                [a, b] if *a >= 1 && *b >= 1 => edges.push((a - 1, b - 1)),
                _ => return Err(Error::Parse(format!("bad edge line {line:?}"))),
            }
        }
        Graph::new(n, edges)
    }
}

fn connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = n;
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            components -= 1;
        }
    }
    components == 1
}

/// Topologies understood by [`build_graph`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GraphKind {
    Path,
    Ring,
    Star,
    Complete,
    ErdosRenyi { p: f64, seed: u64 },
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphKind::Path => write!(f, "path"),
            GraphKind::Ring => write!(f, "ring"),
            GraphKind::Star => write!(f, "star"),
            GraphKind::Complete => write!(f, "complete"),
            GraphKind::ErdosRenyi { p, seed } => write!(f, "er:{p}:{seed}"),
        }
    }
}

/// Builds a connected graph of the requested topology on `n ≥ 2` nodes.
///
/// Erdős–Rényi graphs are redrawn with a salted seed until connected, so the
/// result is a deterministic function of `(n, p, seed)`.
pub fn build_graph(kind: GraphKind, n: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "graph needs n >= 2, got {n}"
        )));
    }
    let edges: Vec<(usize, usize)> = match kind {
        GraphKind::Path => (0..n - 1).map(|i| (i, i + 1)).collect(),
        GraphKind::Ring => {
            let mut e: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
            // n = 2 would close the ring with a duplicate edge.
            if n > 2 {
                e.push((0, n - 1));
            }
            e
        }
        GraphKind::Star => (1..n).map(|i| (0, i)).collect(),
        GraphKind::Complete => (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect(),
        GraphKind::ErdosRenyi { p, seed } => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "edge probability must lie in (0, 1], got {p}"
                )));
            }
            let mut salt: u64 = 0;
            loop {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let e: Vec<_> = (0..n)
                    .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                    .filter(|_| rng.random::<f64>() < p)
                    .collect();
                if connected(n, &e) {
                    break e;
                }
                salt += 1;
            }
        }
    };
    Graph::new(n, edges)
}

/// `L_W = λ_max`, `μ_W = λ_min⁺`, `κ_W = L_W / μ_W` of a symmetric psd matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConstants {
    pub l: f64,
    pub mu: f64,
    pub kappa: f64,
}

/// Largest and smallest positive eigenvalues of a symmetric psd matrix.
///
/// Eigenvalues below `1e-10 · λ_max` are treated as zero.
pub fn spectral_constants(w: &DMatrix<f64>) -> Result<SpectralConstants> {
    if !w.is_square() {
        return Err(Error::InvalidArgument(format!(
            "matrix is not square: {} x {}",
            w.nrows(),
            w.ncols()
        )));
    }
    if w.is_empty() {
        return Err(Error::NoPositiveEigenvalue);
    }
    let eig = SymmetricEigen::new(w.clone()).eigenvalues;
    let l = eig.max();
    if !(l > 0.0) {
        return Err(Error::NoPositiveEigenvalue);
    }
    let cutoff = ZERO_EIGEN_CUTOFF * l;
    let mu = eig
        .iter()
        .copied()
        .filter(|&v| v > cutoff)
        .fold(f64::INFINITY, f64::min);
    Ok(SpectralConstants {
        l,
        mu,
        kappa: l / mu,
    })
}

/// Gossip matrix together with the graph it is compatible with.
#[derive(Debug, Clone, PartialEq)]
pub struct GossipOperator {
    w: DMatrix<f64>,
    graph: Graph,
    spectral: SpectralConstants,
}

impl GossipOperator {
    /// Wraps `w` after checking it against `graph`.
    pub fn new(w: DMatrix<f64>, graph: Graph) -> Result<Self> {
        let violations = validate_gossip(&w, &graph);
        if let Some(v) = violations.first() {
            return Err(Error::InvalidArgument(format!("not a gossip matrix: {v}")));
        }
        Self::new_unchecked(w, graph)
    }

    /// Skips the compatibility check; only the spectrum is computed.
    pub fn new_unchecked(w: DMatrix<f64>, graph: Graph) -> Result<Self> {
        check_dim(graph.n(), w.nrows())?;
        let spectral = spectral_constants(&w)?;
        Ok(GossipOperator { w, graph, spectral })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn spectral(&self) -> SpectralConstants {
        self.spectral
    }

    pub fn l_w(&self) -> f64 {
        self.spectral.l
    }

    pub fn mu_w(&self) -> f64 {
        self.spectral.mu
    }

    pub fn kappa_w(&self) -> f64 {
        self.spectral.kappa
    }

    /// `(W ⊗ I_d) x` for a stacked vector of `n` blocks of size `d`.
    pub fn lift_apply(&self, x: &DVector<f64>, d: usize) -> Result<DVector<f64>> {
        let n = self.n();
        check_dim(n * d, x.len())?;
        let mut out = DVector::zeros(n * d);
        for i in 0..n {
            for j in 0..n {
                let wij = self.w[(i, j)];
                if wij != 0.0 {
                    for k in 0..d {
                        out[i * d + k] += wij * x[j * d + k];
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Graph Laplacian `D - A`.
pub fn laplacian(g: &Graph) -> Result<GossipOperator> {
    let n = g.n();
    let mut w = DMatrix::zeros(n, n);
    for &(a, b) in g.edges() {
        w[(a, b)] -= 1.0;
        w[(b, a)] -= 1.0;
        w[(a, a)] += 1.0;
        w[(b, b)] += 1.0;
    }
    GossipOperator::new_unchecked(w, g.clone())
}

#[derive(Debug, Clone, PartialEq)]
pub enum GossipViolation {
    Size {
        matrix: (usize, usize),
        nodes: usize,
    },
    Asymmetric {
        i: usize,
        j: usize,
    },
    NotPsd {
        min_eigenvalue: f64,
    },
    /// Nonzero weight on a pair that is not an edge.
    OffPattern {
        i: usize,
        j: usize,
    },
    /// The kernel is not exactly the consensus line.
    Kernel {
        null_dim: usize,
        consensus_residual: f64,
    },
}

impl fmt::Display for GossipViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GossipViolation::Size { matrix, nodes } => {
                write!(
                    f,
                    "matrix is {}x{} but graph has {nodes} nodes",
                    matrix.0, matrix.1
                )
            }
            GossipViolation::Asymmetric { i, j } => write!(f, "asymmetric at ({i}, {j})"),
            GossipViolation::NotPsd { min_eigenvalue } => {
                write!(f, "negative eigenvalue {min_eigenvalue:.3e}")
            }
            GossipViolation::OffPattern { i, j } => {
                write!(f, "nonzero entry at ({i}, {j}) outside the edge set")
            }
            GossipViolation::Kernel {
                null_dim,
                consensus_residual,
            } => write!(
                f,
                "kernel has dimension {null_dim}, |W 1| = {consensus_residual:.3e}"
            ),
        }
    }
}

/// Checks the gossip-matrix properties of `w` against `g`. Empty iff valid.
pub fn validate_gossip(w: &DMatrix<f64>, g: &Graph) -> Vec<GossipViolation> {
    let n = g.n();
    if w.nrows() != n || w.ncols() != n {
        return vec![GossipViolation::Size {
            matrix: (w.nrows(), w.ncols()),
            nodes: n,
        }];
    }
    let mut out = Vec::new();
    let eig = SymmetricEigen::new(w.clone()).eigenvalues;
    let norm = eig.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tol = VALIDATION_TOL * norm.max(f64::MIN_POSITIVE);

    for i in 0..n {
        for j in i + 1..n {
            if (w[(i, j)] - w[(j, i)]).abs() > tol {
                out.push(GossipViolation::Asymmetric { i, j });
            }
        }
    }
    let min_eigenvalue = eig.min();
    if min_eigenvalue < -tol {
        out.push(GossipViolation::NotPsd { min_eigenvalue });
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && w[(i, j)] != 0.0 && !g.has_edge(i, j) {
                out.push(GossipViolation::OffPattern { i, j });
            }
        }
    }
    let null_dim = eig.iter().filter(|v| v.abs() <= tol).count();
    let consensus_residual = (w * DVector::from_element(n, 1.0)).norm();
    if null_dim != 1 || consensus_residual > tol * (n as f64).sqrt() {
        out.push(GossipViolation::Kernel {
            null_dim,
            consensus_residual,
        });
    }
    out
}
