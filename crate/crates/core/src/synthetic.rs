//! Degree-corrected stochastic blockmodels and the configuration model.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{canonical, Graph};

/// DC-SBM parameters. `theta` sums to one within every block; pair `{u, v}`
/// is an edge with probability `min(1, θ_u θ_v ω_{b(u) b(v)})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcSbmSpec {
    pub blocks: Vec<usize>,
    pub omega: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
}

impl DcSbmSpec {
    /// Validates the spec and normalizes `theta` per block (uniform when
    /// absent).
    pub fn new(blocks: Vec<usize>, omega: Vec<Vec<f64>>, theta: Option<Vec<f64>>) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let k = omega.len();
        if blocks.is_empty() {
            return bad("no nodes".into());
        }
        if omega.iter().any(|row| row.len() != k) {
            return bad("omega must be square".into());
        }
        for (a, row) in omega.iter().enumerate() {
            for (b, &w) in row.iter().enumerate() {
                if !(w >= 0.0 && w.is_finite()) {
                    return bad(format!("omega[{a}][{b}] must be finite and nonnegative"));
                }
                if w != omega[b][a] {
                    return bad("omega must be symmetric".into());
                }
            }
        }
        if let Some(&b) = blocks.iter().find(|&&b| b >= k) {
            return bad(format!("block {b} out of range for {k} blocks"));
        }
        let raw = match theta {
            Some(t) if t.len() != blocks.len() => return bad("theta must have one entry per node".into()),
            Some(t) if t.iter().any(|&x| !(x > 0.0 && x.is_finite())) => {
                return bad("theta must be positive".into())
            }
            Some(t) => t,
            None => vec![1.0; blocks.len()],
        };
        let mut sums = vec![0.0; k];
        for (&b, &t) in blocks.iter().zip(&raw) {
            sums[b] += t;
        }
        let theta = blocks.iter().zip(&raw).map(|(&b, &t)| t / sums[b]).collect();
        Ok(DcSbmSpec {
            blocks,
            omega,
            theta: Some(theta),
        })
    }

    /// `k` equal blocks of `size` nodes with affinity `omega_in` on the
    /// diagonal, `omega_out` elsewhere, and `θ ∝ (r + offset)^(-exponent)`
    /// for the node of rank `r` within its block.
    pub fn planted(k: usize, size: usize, omega_in: f64, omega_out: f64, exponent: f64, offset: f64) -> Result<Self> {
        let blocks = (0..k * size).map(|i| i / size).collect();
        let omega = (0..k)
            .map(|a| (0..k).map(|b| if a == b { omega_in } else { omega_out }).collect())
            .collect();
        let theta = (0..k * size).map(|i| ((i % size) as f64 + offset).powf(-exponent)).collect();
        DcSbmSpec::new(blocks, omega, Some(theta))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: DcSbmSpec = serde_json::from_str(text)?;
        DcSbmSpec::new(raw.blocks, raw.omega, raw.theta)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        DcSbmSpec::from_json(&text)
    }

    pub fn n(&self) -> usize {
        self.blocks.len()
    }

    pub fn theta(&self) -> &[f64] {
        self.theta.as_deref().expect("normalized on construction")
    }

    /// Edge probability of `{u, v}`; zero on the diagonal.
    pub fn probability(&self, u: usize, v: usize) -> f64 {
        if u == v {
            return 0.0;
        }
        let t = self.theta();
        (t[u] * t[v] * self.omega[self.blocks[u]][self.blocks[v]]).min(1.0)
    }

    /// Symmetric matrix of edge probabilities with zero diagonal.
    pub fn probabilities(&self) -> Result<Array2<f64>> {
        let n = self.n();
        let p = Array2::from_shape_fn((n, n), |(u, v)| self.probability(u, v));
        if p.iter().any(|x| x.is_nan()) {
            return Err(Error::NonFinite {
                op: "edge probability",
                node: 0,
            });
        }
        Ok(p)
    }
}

pub struct DcSbmSample {
    pub graph: Graph,
    pub probabilities: Array2<f64>,
}

/// Draws every pair independently from its edge probability.
pub fn sample_dcsbm(spec: &DcSbmSpec, seed: u64) -> Result<DcSbmSample> {
    let probabilities = spec.probabilities()?;
    let n = spec.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < probabilities[[u, v]] {
                edges.push((u, v));
            }
        }
    }
    Ok(DcSbmSample {
        graph: Graph::from_edges(n, edges),
        probabilities,
    })
}

/// Keeps `⌈keep_frac·m⌉` uniformly chosen edges, rematches the remaining
/// stubs uniformly, then removes self-loops and multi-edges with
/// degree-preserving double-edge swaps among the rematched edges.
pub fn configuration_model(g: &Graph, keep_frac: f64, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&keep_frac) {
        return Err(Error::InvalidArgument("keep fraction must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = g.edges().collect();
    edges.shuffle(&mut rng);
    let keep = ((keep_frac * edges.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    let (kept, rest) = edges.split_at(keep.min(edges.len()));

    let mut stubs: Vec<usize> = rest.iter().flat_map(|&(u, v)| [u, v]).collect();
    stubs.shuffle(&mut rng);
    let mut free: Vec<(usize, usize)> = stubs.chunks(2).map(|c| canonical(c[0], c[1])).collect();

    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for &e in kept.iter().chain(&free) {
        *count.entry(e).or_insert(0) += 1;
    }
    let is_bad = |count: &HashMap<(usize, usize), usize>, e: (usize, usize)| e.0 == e.1 || count[&e] > 1;
    let badness = |count: &HashMap<(usize, usize), usize>, e: (usize, usize)| -> usize {
        if e.0 == e.1 {
            1
        } else {
            count.get(&e).map_or(0, |&c| c.saturating_sub(1))
        }
    };

    let limit = 1000 * (free.len() + 10);
    let mut attempts = 0;
    loop {
        let bad: Vec<usize> = (0..free.len()).filter(|&i| is_bad(&count, free[i])).collect();
        if bad.is_empty() {
            break;
        }
        attempts += 1;
        if attempts > limit || free.len() < 2 {
            return Err(Error::RewireFailed);
        }
        let i = bad[rng.random_range(0..bad.len())];
        let j = rng.random_range(0..free.len());
        if i == j {
            continue;
        }
        let (a, b) = free[i];
        let (c, d) = free[j];
        let (x, y) = if rng.random::<bool>() {
            (canonical(a, c), canonical(b, d))
        } else {
            (canonical(a, d), canonical(b, c))
        };
        let before = badness(&count, free[i]) + badness(&count, free[j]);
        let dec = |count: &mut HashMap<(usize, usize), usize>, e| *count.get_mut(&e).expect("present") -= 1;
        let inc = |count: &mut HashMap<(usize, usize), usize>, e| *count.entry(e).or_insert(0) += 1;
        dec(&mut count, free[i]);
        dec(&mut count, free[j]);
        inc(&mut count, x);
        inc(&mut count, y);
        let after = badness(&count, x) + badness(&count, y);
        if after <= before {
            free[i] = x;
            free[j] = y;
        } else {
            dec(&mut count, x);
            dec(&mut count, y);
            inc(&mut count, (a, b));
            inc(&mut count, (c, d));
        }
    }
    Ok(Graph::from_edges(g.n(), kept.iter().chain(&free).copied()))
}
