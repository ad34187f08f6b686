//! The JSON instance format and seeded instance generation.
//!
//! An instance file names its graph by a path relative to itself; the graph
//! is stored in the edge-list text format next to it.

use std::path::{Path, PathBuf};

use dualsmooth::atoms::{atom_l1, ConvexAtom, FeasibleSet};
use dualsmooth::graph::{laplacian, Graph};
use dualsmooth::problem::{ConsensusProblem, CoupledProblem};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Scenario};
use crate::error::{io_err, json_err, BenchError, Result};

pub const GRAPH_FILE: &str = "graph.edges";
pub const INSTANCE_FILE: &str = "instance.json";

/// Per-node `A_i` and `b_i`.
type Blocks = (Vec<DMatrix<f64>>, Vec<DVector<f64>>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemType {
    Consensus,
    Coupled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(rename = "type")]
    pub kind: ProblemType,
    pub scenario: Scenario,
    pub n: usize,
    /// Consensus only: the shared primal dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Coupled only: the per-node primal dimensions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_i: Option<Vec<usize>>,
    /// Coupled: constraint rows. Consensus: data rows per node.
    pub p: usize,
    pub atoms: Vec<ConvexAtom>,
    /// Per node, row-major.
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub set: FeasibleSet,
    pub lambda: f64,
    /// Edge-list file, relative to the instance file.
    pub graph: String,
    pub seed: u64,
    /// The planted solution the data was generated from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_true: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub file: InstanceFile,
    pub graph: Graph,
}

impl Instance {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let file: InstanceFile = serde_json::from_str(&text).map_err(json_err(path))?;
        let graph_path = path.parent().unwrap_or(Path::new(".")).join(&file.graph);
        let edges = std::fs::read_to_string(&graph_path).map_err(io_err(&graph_path))?;
        let graph = Graph::from_edge_list(&edges)?;
        let inst = Instance { file, graph };
        inst.check()?;
        Ok(inst)
    }

    /// Writes `instance.json` and the edge list into `dir`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let graph_path = dir.join(&self.file.graph);
        std::fs::write(&graph_path, self.graph.to_edge_list()).map_err(io_err(&graph_path))?;
        let path = dir.join(INSTANCE_FILE);
        let json = serde_json::to_string_pretty(&self.file).map_err(json_err(&path))?;
        std::fs::write(&path, json + "\n").map_err(io_err(&path))?;
        Ok(path)
    }

    fn check(&self) -> Result<()> {
        let f = &self.file;
        let fail = |m: String| Err(BenchError::Config(m));
        if self.graph.n() != f.n {
            return fail(format!(
                "graph has {} nodes, instance has {}",
                self.graph.n(),
                f.n
            ));
        }
        if f.atoms.len() != f.n || f.a.len() != f.n || f.b.len() != f.n {
            return fail("atoms, A and b need one entry per node".into());
        }
        match (f.kind, &f.d, &f.d_i) {
            (ProblemType::Consensus, Some(_), None) => {}
            (ProblemType::Coupled, None, Some(di)) if di.len() == f.n => {}
            _ => {
                return fail(
                    "consensus instances give d, coupled instances give d_i per node".into(),
                )
            }
        }
        Ok(())
    }

    fn matrices(&self) -> Result<Blocks> {
        let f = &self.file;
        let mut a = Vec::with_capacity(f.n);
        for i in 0..f.n {
            let (rows, cols) = match f.kind {
                ProblemType::Consensus => (f.p, f.d.unwrap_or(0)),
                ProblemType::Coupled => (f.p, f.d_i.as_ref().map_or(0, |d| d[i])),
            };
            if f.a[i].len() != rows * cols {
                return Err(BenchError::Config(format!(
                    "A[{i}] has {} entries, expected {rows}x{cols}",
                    f.a[i].len()
                )));
            }
            a.push(DMatrix::from_row_slice(rows, cols, &f.a[i]));
            if f.b[i].len() != rows {
                return Err(BenchError::Config(format!(
                    "b[{i}] has {} entries, expected {rows}",
                    f.b[i].len()
                )));
            }
        }
        let b = f.b.iter().map(|v| DVector::from_column_slice(v)).collect();
        Ok((a, b))
    }

    pub fn coupled(&self) -> Result<CoupledProblem> {
        if self.file.kind != ProblemType::Coupled {
            return Err(BenchError::Config(
                "instance is not a coupled problem".into(),
            ));
        }
        let (a, b) = self.matrices()?;
        Ok(CoupledProblem::new(
            self.file.atoms.clone(),
            a,
            b,
            vec![self.file.set.clone(); self.file.n],
            self.file.lambda,
            laplacian(&self.graph)?,
        )?)
    }

    pub fn consensus(&self) -> Result<ConsensusProblem> {
        if self.file.kind != ProblemType::Consensus {
            return Err(BenchError::Config(
                "instance is not a consensus problem".into(),
            ));
        }
        let (a, b) = self.matrices()?;
        Ok(ConsensusProblem::new(
            self.file.atoms.clone(),
            a,
            b,
            self.file.set.clone(),
            self.file.lambda,
            laplacian(&self.graph)?,
        )?)
    }
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    // Row-major draw order, matching the file layout.
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

fn normal_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| StandardNormal.sample(rng))
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Seeded instance for one of the four preset scenarios.
///
/// Basis pursuit plants a sparse `x_i` with `max(1, d/4)` nonzeros per node;
/// the consensus scenarios plant a dense shared `x`. In both cases
/// `b_i = A_i x_i + noise · N(0, I)`.
pub fn generate(cfg: &ExperimentConfig) -> Result<Instance> {
    cfg.validate()?;
    if cfg.scenario == Scenario::Custom {
        return Err(BenchError::Config(
            "the custom scenario reads an instance, it cannot generate one".into(),
        ));
    }
    let graph = cfg.graph.build(cfg.n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = cfg.noise.unwrap_or(cfg.scenario.default_noise());
    let n = cfg.n;
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut x_true = Vec::new();
    if cfg.scenario.is_coupled() {
        let k = (cfg.d / 4).max(1);
        for _ in 0..n {
            let ai = normal_matrix(&mut rng, cfg.p, cfg.d);
            let mut xi = DVector::zeros(cfg.d);
            let mut support = rand::seq::index::sample(&mut rng, cfg.d, k).into_vec();
            support.sort_unstable();
            for j in support {
                xi[j] = StandardNormal.sample(&mut rng);
            }
            let bi = &ai * &xi + normal_vector(&mut rng, cfg.p) * noise;
            x_true.extend(xi.iter().copied());
            a.push(row_major(&ai));
            b.push(bi.as_slice().to_vec());
        }
    } else {
        let x = normal_vector(&mut rng, cfg.d);
        for _ in 0..n {
            let ai = normal_matrix(&mut rng, cfg.p, cfg.d);
            let bi = &ai * &x + normal_vector(&mut rng, cfg.p) * noise;
            a.push(row_major(&ai));
            b.push(bi.as_slice().to_vec());
        }
        x_true.extend(x.iter().copied());
    }
    let coupled = cfg.scenario.is_coupled();
    let file = InstanceFile {
        kind: if coupled {
            ProblemType::Coupled
        } else {
            ProblemType::Consensus
        },
        scenario: cfg.scenario,
        n,
        d: (!coupled).then_some(cfg.d),
        d_i: coupled.then(|| vec![cfg.d; n]),
        p: cfg.p,
        atoms: vec![atom_l1(); n],
        a,
        b,
        set: FeasibleSet::FullSpace,
        lambda: cfg.lambda,
        graph: GRAPH_FILE.into(),
        seed: cfg.seed,
        x_true: Some(x_true),
    };
    let inst = Instance { file, graph };
    inst.check()?;
    Ok(inst)
}
