//! Score matrices of transition counts and their binarization into graphs.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{canonical, Graph};

/// Sparse nonnegative `n x n` matrix keyed by `(row, col)` in lexicographic
/// order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreMatrix {
    n: usize,
    entries: BTreeMap<(usize, usize), f64>,
}

impl ScoreMatrix {
    pub fn new(n: usize) -> Self {
        ScoreMatrix {
            n,
            entries: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        assert!(i < self.n && j < self.n, "({i}, {j}) out of range for n={}", self.n);
        *self.entries.entry((i, j)).or_insert(0.0) += value;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Adds `other` entrywise.
    pub fn merge(&mut self, other: &ScoreMatrix) {
        assert_eq!(self.n, other.n);
        for (&(i, j), &v) in &other.entries {
            self.add(i, j, v);
        }
    }

    /// Subtracts `other` entrywise, dropping entries that reach zero.
    pub fn remove(&mut self, other: &ScoreMatrix) {
        assert_eq!(self.n, other.n);
        for (k, &v) in &other.entries {
            if let Some(cur) = self.entries.get_mut(k) {
                *cur -= v;
                if *cur <= 0.0 {
                    self.entries.remove(k);
                }
            }
        }
    }

    pub fn scaled(&self, factor: f64) -> ScoreMatrix {
        ScoreMatrix {
            n: self.n,
            entries: self.entries.iter().map(|(&k, &v)| (k, v * factor)).collect(),
        }
    }

    /// Writes `i j value` lines in lexicographic order.
    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for ((i, j), v) in self.iter() {
            writeln!(out, "{i} {j} {v}").expect("writing to a String");
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_text(path: impl AsRef<Path>, n: usize) -> Result<ScoreMatrix> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s = ScoreMatrix::new(n);
        for (line_no, line) in text.lines().enumerate() {
            let bad = |message: &str| Error::Parse {
                line: line_no + 1,
                message: message.into(),
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let [i, j, v] = fields[..] else {
                return Err(bad("expected `i j count`"));
            };
            let i: usize = i.parse().map_err(|_| bad("invalid row index"))?;
            let j: usize = j.parse().map_err(|_| bad("invalid column index"))?;
            let v: f64 = v.parse().map_err(|_| bad("invalid count"))?;
            if i >= n || j >= n {
                return Err(bad("index out of range"));
            }
            s.add(i, j, v);
        }
        Ok(s)
    }
}

/// `s'_ij = s'_ji = max(s_ij, s_ji)` with the diagonal removed.
pub fn symmetrize(s: &ScoreMatrix) -> ScoreMatrix {
    let mut out = ScoreMatrix::new(s.n);
    for ((i, j), v) in s.iter() {
        if i == j || v <= 0.0 {
            continue;
        }
        let m = v.max(s.get(j, i));
        out.entries.insert((i, j), m);
        out.entries.insert((j, i), m);
    }
    out
}

/// Symmetrized score of each pair, zero when absent.
pub fn scores_for_pairs(s: &ScoreMatrix, pairs: &[(usize, usize)]) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(i, j)| s.get(i, j).max(s.get(j, i)))
        .collect()
}

/// Samples a graph with exactly `target_m` edges from a symmetric score
/// matrix.
///
/// First every node that has no edge yet, in ascending order, draws a
/// partner `j` with probability proportional to its row of scores. Then
/// further edges are drawn without replacement with probability proportional
/// to their score until `target_m` is reached.
pub fn assemble_graph(s: &ScoreMatrix, target_m: usize, seed: u64) -> Result<Graph> {
    let n = s.n;
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for ((i, j), v) in s.iter() {
        if i != j && v > 0.0 {
            rows[i].push((j, v));
        }
    }
    if let Some(i) = rows.iter().position(|r| r.is_empty()) {
        return Err(Error::IsolatedNode(i));
    }
    // Upper-triangle candidates in lexicographic order.
    let pairs: Vec<((usize, usize), f64)> = rows
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.iter().filter(move |&&(j, _)| i < j).map(move |&(j, v)| ((i, j), v)))
        .collect();
    if target_m > pairs.len() {
        return Err(Error::NotEnoughPairs {
            requested: target_m,
            available: pairs.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: HashSet<(usize, usize)> = HashSet::with_capacity(target_m);
    let mut degree = vec![0usize; n];
    for i in 0..n {
        if degree[i] > 0 {
            continue;
        }
        let row = &rows[i];
        let total: f64 = row.iter().map(|&(_, v)| v).sum();
        let j = row[pick(row.iter().map(|&(_, v)| v), total, &mut rng)].0;
        chosen.insert(canonical(i, j));
        degree[i] += 1;
        degree[j] += 1;
    }
    if chosen.len() > target_m {
        return Err(Error::InvalidArgument(format!(
            "{target_m} edges cannot cover every node; at least {} are needed",
            chosen.len()
        )));
    }

    let mut remaining: Vec<((usize, usize), f64)> = pairs;
    let mut cumulative = cumulative_of(&remaining);
    let mut misses = 0;
    while chosen.len() < target_m {
        let total = *cumulative.last().expect("positive pairs remain");
        let u = rng.random::<f64>() * total;
        let k = cumulative.partition_point(|&c| c <= u).min(remaining.len() - 1);
        if chosen.insert(remaining[k].0) {
            misses = 0;
            continue;
        }
        misses += 1;
        if misses >= 32 {
            remaining.retain(|(e, _)| !chosen.contains(e));
            cumulative = cumulative_of(&remaining);
            misses = 0;
        }
    }

    let mut edges: Vec<(usize, usize)> = chosen.into_iter().collect();
    edges.sort_unstable();
    Ok(Graph::from_edges(n, edges))
}

fn cumulative_of(pairs: &[((usize, usize), f64)]) -> Vec<f64> {
    let mut acc = 0.0;
    pairs
        .iter()
        .map(|&(_, v)| {
            acc += v;
            acc
        })
        .collect()
}

fn pick(weights: impl Iterator<Item = f64>, total: f64, rng: &mut ChaCha8Rng) -> usize {
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (k, w) in weights.enumerate() {
        acc += w;
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_triples(n: usize, t: &[(usize, usize, f64)]) -> ScoreMatrix {
        let mut s = ScoreMatrix::new(n);
        for &(i, j, v) in t {
            s.add(i, j, v);
        }
        s
    }

    #[test]
    fn symmetrize_takes_max() {
        let s = symmetrize(&from_triples(3, &[(1, 2, 3.0), (2, 1, 5.0)]));
        assert_eq!((s.get(1, 2), s.get(2, 1)), (5.0, 5.0));
        let sym = from_triples(3, &[(0, 1, 2.0), (1, 0, 2.0)]);
        assert_eq!(symmetrize(&sym), sym);
        assert_eq!(symmetrize(&from_triples(1, &[(0, 0, 7.0)])).nnz(), 0);
    }

    #[test]
    fn symmetrize_is_idempotent() {
        let s = from_triples(4, &[(0, 1, 1.0), (1, 2, 4.0), (3, 0, 2.0), (2, 2, 1.0)]);
        let once = symmetrize(&s);
        assert_eq!(symmetrize(&once), once);
    }

    #[test]
    fn pair_scores() {
        let s = from_triples(3, &[(1, 2, 3.0), (2, 1, 5.0), (0, 1, 5.0)]);
        assert_eq!(scores_for_pairs(&s, &[(0, 1), (0, 2), (1, 2)]), vec![5.0, 0.0, 5.0]);
    }

    #[test]
    fn forced_partner() {
        let mut s = ScoreMatrix::new(8);
        for i in 0..7 {
            s.add(i, (i + 1) % 7, 1.0);
            s.add((i + 1) % 7, i, 1.0);
        }
        s.add(3, 7, 2.0);
        s.add(7, 3, 2.0);
        for seed in 0..20 {
            let g = assemble_graph(&s, 7, seed).unwrap();
            assert!(g.has_edge(3, 7));
            assert_eq!(g.m(), 7);
        }
    }

    #[test]
    fn uniform_triangle() {
        let s = symmetrize(&from_triples(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]));
        let g = assemble_graph(&s, 3, 4).unwrap();
        assert_eq!(g, Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]));
    }

    #[test]
    fn hub_heavy_scores_keep_min_degree() {
        let n = 12;
        let mut s = ScoreMatrix::new(n);
        for i in 1..n {
            s.add(0, i, 1000.0);
            s.add(i, 0, 1000.0);
            s.add(i, 1 + i % (n - 1), 0.01);
            s.add(1 + i % (n - 1), i, 0.01);
        }
        for seed in 0..1000 {
            let g = assemble_graph(&s, 14, seed).unwrap();
            assert_eq!(g.m(), 14);
            assert!(g.degrees().iter().all(|&d| d >= 1));
        }
    }

    #[test]
    fn errors() {
        let s = symmetrize(&from_triples(3, &[(0, 1, 1.0)]));
        assert!(matches!(assemble_graph(&s, 1, 0), Err(Error::IsolatedNode(2))));
        let s = symmetrize(&from_triples(3, &[(0, 1, 1.0), (1, 2, 1.0)]));
        assert!(matches!(
            assemble_graph(&s, 3, 0),
            Err(Error::NotEnoughPairs { requested: 3, available: 2 })
        ));
    }

    #[test]
    fn text_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.txt");
        let s = from_triples(4, &[(3, 1, 2.0), (0, 2, 7.0), (0, 1, 1.5)]);
        s.write_text(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "0 1 1.5\n0 2 7\n3 1 2\n");
        assert_eq!(ScoreMatrix::read_text(&path, 4).unwrap(), s);
    }
}
