//! Synchronous message-passing execution of the solver.
//!
//! Every node owns a disjoint store: its slices of the iterates, its local
//! objective term and constraint map, and the row of the gossip matrix it is
//! allowed to use. The only way data moves between nodes is a round of
//! [`Bus`] messages along graph edges, and every round is logged.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::affine::{AffineConstrainedProblem, LocalTerm, Objective};
use crate::apapc::{drive, resolve_params, ApapcParams, Engine, Solution, SolveOptions};
use crate::error::{check_dim, Error, Result};
use crate::graph::GossipOperator;

/// One communication round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub messages: usize,
    /// Scalars sent in total.
    pub volume: usize,
    pub tag: String,
}

/// Neighbor-only message delivery; inboxes are keyed by sender.
#[derive(Debug, Default)]
struct Bus {
    inboxes: Vec<BTreeMap<usize, DVector<f64>>>,
}

impl Bus {
    fn new(n: usize) -> Self {
        Bus {
            inboxes: vec![BTreeMap::new(); n],
        }
    }

    /// Every node sends its block to each graph neighbor.
    fn exchange(&mut self, neighbors: &[Vec<usize>], blocks: &[DVector<f64>]) -> (usize, usize) {
        let mut messages = 0;
        let mut volume = 0;
        for inbox in &mut self.inboxes {
            inbox.clear();
        }
        for (from, nbrs) in neighbors.iter().enumerate() {
            for &to in nbrs {
                self.inboxes[to].insert(from, blocks[from].clone());
                messages += 1;
                volume += blocks[from].len();
            }
        }
        (messages, volume)
    }
}

/// `Σ_j w_ij x_j` at node `i` from its own block and its inbox, summed in
/// increasing `j`.
fn combine(
    id: usize,
    row: &[(usize, f64)],
    own: &DVector<f64>,
    inbox: &BTreeMap<usize, DVector<f64>>,
) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(own.len());
    for &(j, w) in row {
        let xj = if j == id {
            own
        } else {
            inbox
                .get(&j)
                .ok_or(Error::MissingMessage { from: j, to: id })?
        };
        for k in 0..out.len() {
            out[k] += w * xj[k];
        }
    }
    Ok(out)
}

fn gossip_rows(gossip: &GossipOperator) -> Vec<Vec<(usize, f64)>> {
    let w = gossip.matrix();
    (0..gossip.n())
        .map(|i| {
            (0..gossip.n())
                .filter(|&j| w[(i, j)] != 0.0)
                .map(|j| (j, w[(i, j)]))
                .collect()
        })
        .collect()
}

fn neighbor_lists(gossip: &GossipOperator) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); gossip.n()];
    for &(a, b) in gossip.graph().edges() {
        out[a].push(b);
        out[b].push(a);
    }
    for l in &mut out {
        l.sort_unstable();
    }
    out
}

/// One gossip round on standalone blocks: `y_i = Σ_j W_ij x_j`.
pub fn decentralized_matvec(
    gossip: &GossipOperator,
    blocks: &[DVector<f64>],
) -> Result<(Vec<DVector<f64>>, RoundLog)> {
    check_dim(gossip.n(), blocks.len())?;
    let q = blocks.first().map_or(0, |b| b.len());
    for b in blocks {
        check_dim(q, b.len())?;
    }
    let neighbors = neighbor_lists(gossip);
    let rows = gossip_rows(gossip);
    let mut bus = Bus::new(gossip.n());
    let (messages, volume) = bus.exchange(&neighbors, blocks);
    let out = (0..gossip.n())
        .map(|i| combine(i, &rows[i], &blocks[i], &bus.inboxes[i]))
        .collect::<Result<Vec<_>>>()?;
    let log = RoundLog {
        round: 1,
        messages,
        volume,
        tag: "gossip".into(),
    };
    Ok((out, log))
}

/// Everything node `i` may read.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: usize,
    /// Row `i` of the gossip matrix restricted to its nonzeros.
    row: Vec<(usize, f64)>,
    term: LocalTerm,
    /// `q × lead_i` map onto the gossip coordinates.
    local: Option<DMatrix<f64>>,
    lead: usize,
    rhs: DVector<f64>,
    reg_mu: f64,
    reg_anchor: DVector<f64>,
    pub u: DVector<f64>,
    pub u_f: DVector<f64>,
    pub u_g: DVector<f64>,
    pub u_half: DVector<f64>,
    pub z: DVector<f64>,
    /// Multiplier block in `R^q`.
    pub y: DVector<f64>,
    /// Last local residual block `(K u_half − c)_i`.
    pub r: DVector<f64>,
    g: DVector<f64>,
}

impl NodeState {
    fn gossip_part(&self, v: &DVector<f64>) -> DVector<f64> {
        v.rows(self.lead, v.len() - self.lead).into_owned()
    }

    fn gradient(&self, at: &DVector<f64>) -> Result<DVector<f64>> {
        let mut g = self.term.gradient(at)?;
        if self.reg_mu > 0.0 {
            g += (at - &self.reg_anchor) * self.reg_mu;
        }
        Ok(g)
    }

    /// Lines up to `u_half`; returns the block this node gossips next.
    fn first_half(&mut self, p: &ApapcParams) -> Result<DVector<f64>> {
        let shrink = 1.0 / (1.0 + p.eta * p.alpha);
        self.u_g = &self.u * p.tau + &self.u_f * (1.0 - p.tau);
        self.g = self.gradient(&self.u_g)? - &self.u_g * p.alpha;
        self.u_half = (&self.u - (&self.g + &self.z) * p.eta) * shrink;
        Ok(self.gossip_part(&self.u_half))
    }

    /// `r_i = Σ_j W_ij g_j + local · lead − c_i`; returns `r_i` for the next round.
    fn residual(&mut self, inbox: &BTreeMap<usize, DVector<f64>>) -> Result<DVector<f64>> {
        let own = self.gossip_part(&self.u_half);
        let mut r = combine(self.id, &self.row, &own, inbox)?;
        if let Some(m) = &self.local {
            r += m * self.u_half.rows(0, self.lead);
        }
        self.r = r - &self.rhs;
        Ok(self.r.clone())
    }

    /// Dual and primal updates from `(Kᵀ r)_i`.
    fn second_half(
        &mut self,
        p: &ApapcParams,
        inbox: &BTreeMap<usize, DVector<f64>>,
    ) -> Result<()> {
        let shrink = 1.0 / (1.0 + p.eta * p.alpha);
        let wr = combine(self.id, &self.row, &self.r, inbox)?;
        let mut kt = DVector::zeros(self.u.len());
        if let Some(m) = &self.local {
            kt.rows_mut(0, self.lead).copy_from(&m.tr_mul(&self.r));
        }
        let q = wr.len();
        kt.rows_mut(self.lead, q).copy_from(&wr);
        self.z += kt * p.theta;
        self.y += &self.r * p.theta;
        let u_next = (&self.u - (&self.g + &self.z) * p.eta) * shrink;
        self.u_f = &self.u_g + (&u_next - &self.u) * (2.0 * p.tau / (2.0 - p.tau));
        self.u = u_next;
        Ok(())
    }
}

/// The simulated network.
pub struct Network {
    nodes: Vec<NodeState>,
    neighbors: Vec<Vec<usize>>,
    bus: Bus,
    ledger: Vec<RoundLog>,
    trace: Option<Vec<String>>,
    grad_evals: usize,
    k_applications: usize,
    kt_applications: usize,
}

impl Network {
    /// Partitions `problem` over the nodes of its gossip graph.
    pub fn new(problem: &AffineConstrainedProblem, u0: &DVector<f64>, trace: bool) -> Result<Self> {
        let op = problem.network().ok_or_else(|| {
            Error::UnsupportedTopology(
                "constraint is a dense matrix, not gossip plus local maps".into(),
            )
        })?;
        let sep = match problem.objective() {
            Objective::Separable(s) => s,
            Objective::Quadratic(_) => {
                return Err(Error::UnsupportedTopology(
                    "objective is not block separable".into(),
                ))
            }
        };
        let n = op.gossip().n();
        check_dim(n, sep.terms().len())?;
        if sep.offsets() != op.offsets() {
            return Err(Error::UnsupportedTopology(
                "objective blocks and constraint blocks are not aligned".into(),
            ));
        }
        check_dim(problem.dim(), u0.len())?;
        let q = op.gossip_dim();
        let rows = gossip_rows(op.gossip());
        let (reg_mu, anchor) = match problem.tikhonov() {
            Some(t) => (t.mu, t.anchor.clone()),
            None => (0.0, DVector::zeros(problem.dim())),
        };
        let mut nodes = Vec::with_capacity(n);
        for (i, row) in rows.into_iter().enumerate() {
            let off = op.offsets()[i];
            let dim = op.block_dim(i);
            let u = u0.rows(off, dim).into_owned();
            nodes.push(NodeState {
                id: i,
                row,
                term: sep.terms()[i].clone(),
                local: op.local_maps()[i].clone(),
                lead: op.lead_dims()[i],
                rhs: problem.rhs().rows(i * q, q).into_owned(),
                reg_mu,
                reg_anchor: anchor.rows(off, dim).into_owned(),
                u_f: u.clone(),
                u_g: u.clone(),
                u_half: u.clone(),
                z: DVector::zeros(dim),
                y: DVector::zeros(q),
                r: DVector::from_element(q, f64::NAN),
                g: DVector::zeros(dim),
                u,
            });
        }
        Ok(Network {
            nodes,
            neighbors: neighbor_lists(op.gossip()),
            bus: Bus::new(n),
            ledger: Vec::new(),
            trace: trace.then(Vec::new),
            grad_evals: 0,
            k_applications: 0,
            kt_applications: 0,
        })
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn ledger(&self) -> &[RoundLog] {
        &self.ledger
    }

    fn round(&mut self, blocks: &[DVector<f64>], tag: &str) -> Result<()> {
        let (messages, volume) = self.bus.exchange(&self.neighbors, blocks);
        let log = RoundLog {
            round: self.ledger.len() + 1,
            messages,
            volume,
            tag: tag.into(),
        };
        if let Some(t) = &mut self.trace {
            t.push(serde_json::to_string(&log).expect("plain record serializes"));
        }
        self.ledger.push(log);
        Ok(())
    }

    /// Sets `y⁰` and `z⁰ = Kᵀy⁰`, spending one round.
    pub fn warm_start(&mut self, y0: &DVector<f64>) -> Result<()> {
        let q = self.nodes[0].y.len();
        check_dim(self.nodes.len() * q, y0.len())?;
        let blocks: Vec<_> = (0..self.nodes.len())
            .map(|i| y0.rows(i * q, q).into_owned())
            .collect();
        self.round(&blocks, "multiplier warm start")?;
        for (node, inbox) in self.nodes.iter_mut().zip(&self.bus.inboxes) {
            node.y = blocks[node.id].clone();
            node.r = node.y.clone();
            let wy = combine(node.id, &node.row, &node.y, inbox)?;
            let mut z = DVector::zeros(node.u.len());
            if let Some(m) = &node.local {
                z.rows_mut(0, node.lead).copy_from(&m.tr_mul(&node.y));
            }
            z.rows_mut(node.lead, q).copy_from(&wy);
            node.z = z;
        }
        Ok(())
    }

    fn gather(&self, f: impl Fn(&NodeState) -> &DVector<f64>) -> DVector<f64> {
        let parts: Vec<f64> = self
            .nodes
            .iter()
            .flat_map(|n| f(n).iter().copied())
            .collect();
        DVector::from_vec(parts)
    }

    /// Messages sent in total according to the ledger.
    pub fn total_messages(&self) -> usize {
        self.ledger.iter().map(|r| r.messages).sum()
    }

    pub fn total_volume(&self) -> usize {
        self.ledger.iter().map(|r| r.volume).sum()
    }
}

impl Engine for Network {
    fn step(&mut self, params: &ApapcParams) -> Result<()> {
        let mut outgoing = Vec::with_capacity(self.nodes.len());
        for node in &mut self.nodes {
            outgoing.push(node.first_half(params)?);
        }
        self.grad_evals += 1;
        self.round(&outgoing, "W-multiply of u_half")?;
        let mut residuals = Vec::with_capacity(self.nodes.len());
        for (node, inbox) in self.nodes.iter_mut().zip(&self.bus.inboxes) {
            residuals.push(node.residual(inbox)?);
        }
        self.k_applications += 1;
        self.round(&residuals, "W-multiply in z-update")?;
        for (node, inbox) in self.nodes.iter_mut().zip(&self.bus.inboxes) {
            node.second_half(params, inbox)?;
        }
        self.kt_applications += 1;
        Ok(())
    }

    fn iterate(&self) -> DVector<f64> {
        self.gather(|n| &n.u)
    }

    fn dual(&self) -> DVector<f64> {
        self.gather(|n| &n.z)
    }

    fn multiplier(&self) -> DVector<f64> {
        self.gather(|n| &n.y)
    }

    fn feas_half(&self) -> f64 {
        self.gather(|n| &n.r).norm()
    }

    fn grad_evals(&self) -> usize {
        self.grad_evals
    }

    fn k_applications(&self) -> usize {
        self.k_applications
    }

    fn kt_applications(&self) -> usize {
        self.kt_applications
    }

    fn comm_rounds(&self) -> usize {
        self.ledger.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecentralizedOutput {
    pub solution: Solution,
    pub ledger: Vec<RoundLog>,
    /// JSON lines, one per round, when tracing was requested.
    pub trace: Vec<String>,
}

/// Runs the solver on the simulated network with the same parameters,
/// stopping rule and logging as [`crate::apapc::solve`].
pub fn run_decentralized(
    problem: &AffineConstrainedProblem,
    options: &SolveOptions,
    trace: bool,
) -> Result<DecentralizedOutput> {
    let params = resolve_params(problem, options)?;
    let u0 = options
        .initial
        .clone()
        .unwrap_or_else(|| DVector::zeros(problem.dim()));
    let mut net = Network::new(problem, &u0, trace)?;
    if let Some(y0) = &options.initial_multiplier {
        net.warm_start(y0)?;
    }
    let solution = drive(&mut net, problem, &params, options)?;
    Ok(DecentralizedOutput {
        solution,
        ledger: net.ledger.clone(),
        trace: net.trace.take().unwrap_or_default(),
    })
}
