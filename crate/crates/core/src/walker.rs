//! Second-order biased random walks.
//!
//! From state `(prev, cur)` the unnormalized weight of moving to a neighbor
//! `x` of `cur` is `1/p` when `x == prev`, `1` when `x` is adjacent to `prev`
//! and `1/q` otherwise. The first step of a walk is uniform over the start
//! node's neighbors, and start nodes are uniform over all nodes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembler::ScoreMatrix;
use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    /// Nodes per walk.
    pub walk_len: usize,
    /// Return parameter.
    pub p: f64,
    /// In-out parameter.
    pub q: f64,
    pub batch_size: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            walk_len: 16,
            p: 1.0,
            q: 1.0,
            batch_size: 128,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walk_len < 2 {
            return Err(Error::InvalidArgument("walk length must be at least 2".into()));
        }
        if !(self.p > 0.0 && self.q > 0.0) {
            return Err(Error::InvalidArgument("p and q must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Row-major `batch_size x walk_len` matrix of node indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkBatch {
    nodes: Vec<usize>,
    walk_len: usize,
}

impl WalkBatch {
    pub fn new(nodes: Vec<usize>, walk_len: usize) -> Self {
        assert!(walk_len > 0 && nodes.len().is_multiple_of(walk_len), "ragged walk batch");
        WalkBatch { nodes, walk_len }
    }

    pub fn walk_len(&self) -> usize {
        self.walk_len
    }

    pub fn len(&self) -> usize {
        self.nodes.len() / self.walk_len
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn walk(&self, i: usize) -> &[usize] {
        &self.nodes[i * self.walk_len..(i + 1) * self.walk_len]
    }

    pub fn walks(&self) -> impl Iterator<Item = &[usize]> {
        self.nodes.chunks(self.walk_len)
    }

    /// Node index at step `t` of every walk.
    pub fn column(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        self.walks().map(move |w| w[t])
    }

    pub fn extend(&mut self, other: &WalkBatch) {
        assert_eq!(self.walk_len, other.walk_len);
        self.nodes.extend_from_slice(&other.nodes);
    }
}

/// Streams walk batches from a graph with one seeded generator.
pub struct WalkSampler<'g> {
    graph: &'g Graph,
    cfg: WalkConfig,
    rng: ChaCha8Rng,
    weights: Vec<f64>,
}

impl<'g> WalkSampler<'g> {
    pub fn new(graph: &'g Graph, cfg: WalkConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if graph.n() < 2 {
            return Err(Error::InvalidArgument("walks need at least two nodes".into()));
        }
        Ok(WalkSampler {
            graph,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            weights: Vec::new(),
        })
    }

    pub fn next_batch(&mut self) -> Result<WalkBatch> {
        let t_len = self.cfg.walk_len;
        let mut nodes = Vec::with_capacity(self.cfg.batch_size * t_len);
        for _ in 0..self.cfg.batch_size {
            let start = self.rng.random_range(0..self.graph.n());
            nodes.push(start);
            let mut prev = None;
            let mut cur = start;
            for _ in 1..t_len {
                let next = self.step(prev, cur)?;
                nodes.push(next);
                prev = Some(cur);
                cur = next;
            }
        }
        Ok(WalkBatch::new(nodes, t_len))
    }

    /// Draws the successor of `cur` given the previous node.
    pub fn step(&mut self, prev: Option<usize>, cur: usize) -> Result<usize> {
        let nbrs = self.graph.neighbors(cur);
        if nbrs.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "random walk reached node {cur} which has no neighbors"
            )));
        }
        let prev = match prev {
            Some(prev) if !(self.cfg.p == 1.0 && self.cfg.q == 1.0) => prev,
            _ => return Ok(nbrs[self.rng.random_range(0..nbrs.len())]),
        };
        self.weights.clear();
        let mut total = 0.0;
        for &x in nbrs {
            total += second_order_weight(self.graph, prev, x, self.cfg.p, self.cfg.q);
            self.weights.push(total);
        }
        let u = self.rng.random::<f64>() * total;
        let i = self.weights.partition_point(|&c| c <= u);
        Ok(nbrs[i.min(nbrs.len() - 1)])
    }
}

fn second_order_weight(g: &Graph, prev: usize, x: usize, p: f64, q: f64) -> f64 {
    if x == prev {
        1.0 / p
    } else if g.has_edge(prev, x) {
        1.0
    } else {
        1.0 / q
    }
}

/// Samples one batch of walks.
pub fn sample_walks(g: &Graph, cfg: WalkConfig, seed: u64) -> Result<WalkBatch> {
    WalkSampler::new(g, cfg, seed)?.next_batch()
}

/// Directed transition counts `(walk[t], walk[t+1])` over all walks.
pub fn transition_counts(walks: &WalkBatch, n: usize) -> ScoreMatrix {
    let mut s = ScoreMatrix::new(n);
    add_transitions(&mut s, walks);
    s
}

pub(crate) fn add_transitions(s: &mut ScoreMatrix, walks: &WalkBatch) {
    for w in walks.walks() {
        for pair in w.windows(2) {
            s.add(pair[0], pair[1], 1.0);
        }
    }
}
