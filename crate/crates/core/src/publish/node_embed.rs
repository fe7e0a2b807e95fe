//! Skip-gram style embeddings of users and cells over the user-visits-cell
//! and friendship graph, trained with negative sampling.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::PublishError;
use crate::grid::{Cell, GridSpec};
use crate::nn::sigmoid;
use crate::stats::rng_from;
use crate::traj::{Trajectory, UserId};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    User(UserId),
    Cell(Cell),
}

/// Undirected simple graph with nodes indexed in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Graph {
    nodes: Vec<Node>,
    index: BTreeMap<Node, usize>,
    adjacency: Vec<BTreeSet<usize>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, n: Node) -> usize {
        if let Some(&i) = self.index.get(&n) {
            return i;
        }
        let i = self.nodes.len();
        self.nodes.push(n.clone());
        self.index.insert(n, i);
        self.adjacency.push(BTreeSet::new());
        i
    }

    /// Self-loops are ignored.
    pub fn add_edge(&mut self, a: Node, b: Node) {
        let i = self.add_node(a);
        let j = self.add_node(b);
        if i != j {
            self.adjacency[i].insert(j);
            self.adjacency[j].insert(i);
        }
    }

    /// Users linked to every cell they stay in and to their friends.
    pub fn from_visits_and_friends(
        trajectories: &BTreeMap<UserId, Trajectory>,
        friends: &[(UserId, UserId)],
        grid: &GridSpec,
    ) -> Self {
        let mut g = Graph::new();
        for (u, t) in trajectories {
            g.add_node(Node::User(u.clone()));
            for s in t.stays() {
                g.add_edge(Node::User(u.clone()), Node::Cell(grid.clamp_cell(s.location())));
            }
        }
        for (a, b) in friends {
            g.add_edge(Node::User(a.clone()), Node::User(b.clone()));
        }
        g
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_index(&self, n: &Node) -> Option<usize> {
        self.index.get(n).copied()
    }

    pub fn neighbors(&self, i: usize) -> &BTreeSet<usize> {
        &self.adjacency[i]
    }

    /// Each undirected edge once, as `(low, high)`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, n)| n.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub negatives: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim: 32,
            epochs: 100,
            learning_rate: 0.05,
            negatives: 5,
        }
    }
}

/// Objective on one epoch's samples before and after that epoch's update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochObjective {
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpace {
    pub nodes: Vec<Node>,
    pub vectors: Vec<Vec<f64>>,
    pub trace: Vec<EpochObjective>,
}

impl EmbeddingSpace {
    pub fn vector(&self, n: &Node) -> Option<&[f64]> {
        self.nodes
            .iter()
            .position(|m| m == n)
            .map(|i| self.vectors[i].as_slice())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ln sigmoid(z)` without overflow.
fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -libm::log1p(libm::exp(-z))
    } else {
        z - libm::log1p(libm::exp(z))
    }
}

struct Sample {
    a: usize,
    b: usize,
    negatives: Vec<usize>,
}

fn objective(v: &[Vec<f64>], samples: &[Sample]) -> f64 {
    samples
        .iter()
        .map(|s| {
            log_sigmoid(dot(&v[s.a], &v[s.b]))
                + s.negatives
                    .iter()
                    .map(|&j| log_sigmoid(-dot(&v[s.a], &v[j])))
                    .sum::<f64>()
        })
        .sum()
}

fn gradient(v: &[Vec<f64>], samples: &[Sample]) -> Vec<Vec<f64>> {
    let mut g = vec![vec![0.0; v[0].len()]; v.len()];
    for s in samples {
        let c = 1.0 - sigmoid(dot(&v[s.a], &v[s.b]));
        for d in 0..v[0].len() {
            g[s.a][d] += c * v[s.b][d];
            g[s.b][d] += c * v[s.a][d];
        }
        for &j in &s.negatives {
            let c = -sigmoid(dot(&v[s.a], &v[j]));
            for d in 0..v[0].len() {
                g[s.a][d] += c * v[j][d];
                g[j][d] += c * v[s.a][d];
            }
        }
    }
    g
}

/// Full-batch ascent on
/// `sum_pos ln s(theta_i . theta_j) + sum_neg ln s(-theta_i . theta_j)`.
///
/// Every epoch draws a fresh sample set: each edge in both directions, with
/// negatives drawn from the degree distribution among non-neighbors. The step
/// is halved until the objective on that set does not decrease.
pub fn train_node_embeddings(graph: &Graph, cfg: &EmbeddingConfig, seed: u64) -> Result<EmbeddingSpace, PublishError> {
    let n = graph.nodes.len();
    if n == 0 {
        return Err(PublishError::Empty("graph"));
    }
    if cfg.dim < 2 {
        return Err(PublishError::Dimension {
            expected: 2,
            found: cfg.dim,
        });
    }
    let mut init = rng_from(seed, 0);
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..cfg.dim)
                .map(|_| (init.random::<f64>() - 0.5) / cfg.dim as f64)
                .collect()
        })
        .collect();

    let edges = graph.edges();
    let degree: Vec<f64> = graph.adjacency.iter().map(|a| a.len() as f64).collect();
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for d in &degree {
        acc += d;
        cumulative.push(acc);
    }
    let total = acc;

    let mut rng = rng_from(seed, 1);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut samples = Vec::with_capacity(2 * edges.len());
        for &(i, j) in &edges {
            for (a, b) in [(i, j), (j, i)] {
                let excluded = |k: usize| k == a || graph.adjacency[a].contains(&k);
                let eligible = (0..n).any(|k| !excluded(k) && degree[k] > 0.0);
                let mut negatives = Vec::new();
                if eligible {
                    while negatives.len() < cfg.negatives {
                        let r = rng.random::<f64>() * total;
                        let k = cumulative.partition_point(|&c| c <= r).min(n - 1);
                        if !excluded(k) {
                            negatives.push(k);
                        }
                    }
                }
                samples.push(Sample { a, b, negatives });
            }
        }
        let before = objective(&v, &samples);
        let g = gradient(&v, &samples);
        let mut step = cfg.learning_rate;
        let mut after = before;
        for _ in 0..30 {
            let cand: Vec<Vec<f64>> = v
                .iter()
                .zip(&g)
                .map(|(vi, gi)| vi.iter().zip(gi).map(|(x, d)| x + step * d).collect())
                .collect();
            let obj = objective(&cand, &samples);
            if !obj.is_finite() {
                return Err(PublishError::Divergence { step: epoch });
            }
            if obj >= before {
                v = cand;
                after = obj;
                break;
            }
            step *= 0.5;
        }
        trace.push(EpochObjective { before, after });
    }
    Ok(EmbeddingSpace {
        nodes: graph.nodes.clone(),
        vectors: v,
        trace,
    })
}
