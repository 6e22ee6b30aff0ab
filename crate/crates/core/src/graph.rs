//! Undirected simple graphs in compressed sparse row form, edge-list
//! ingestion, component extraction and connectivity-preserving holdout splits.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected simple graph. Neighbor lists are sorted and symmetric, with no
/// self-loops or duplicates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Graph {
    /// Builds a graph on `n` nodes from arbitrary (possibly repeated or
    /// reversed) pairs. Self-loops are dropped.
    ///
    /// Panics if a pair references a node `>= n`.
    pub fn from_edges<I>(n: usize, edges: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (u, v) in edges {
            assert!(u < n && v < n, "edge ({u}, {v}) out of range for n={n}");
            if u == v {
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            targets.extend_from_slice(list);
            offsets.push(targets.len());
        }
        Graph { offsets, targets }
    }

    pub fn empty(n: usize) -> Self {
        Graph {
            offsets: vec![0; n + 1],
            targets: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn m(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.targets[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n()).map(|u| self.degree(u)).collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Undirected edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    /// Connected components as a label per node; labels are assigned in order
    /// of each component's smallest node.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let n = self.n();
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = count;
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                for &v in self.neighbors(u) {
                    if label[v] == usize::MAX {
                        label[v] = count;
                        queue.push_back(v);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    pub fn is_connected(&self) -> bool {
        self.n() > 0 && self.components().1 == 1
    }

    /// Breadth-first distances from `source`; unreachable nodes are `None`.
    pub fn bfs_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n()];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0) + 1;
            for &v in self.neighbors(u) {
                if dist[v].is_none() {
                    dist[v] = Some(d);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Writes the graph as a tab-separated edge list, one `u<TAB>v` per line
    /// with `u < v`.
    pub fn write_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::with_capacity(self.m() * 12);
        for (u, v) in self.edges() {
            out.push_str(&format!("{u}\t{v}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// A graph read from disk together with the original identifiers of its
/// densely relabeled nodes.
#[derive(Clone, Debug)]
pub struct LoadedGraph {
    pub graph: Graph,
    /// `ids[i]` is the identifier node `i` carried in the file.
    pub ids: Vec<u64>,
}

/// Reads an edge list with two whitespace-separated nonnegative integers per
/// line. Blank lines and lines starting with `#` or `%` are skipped.
pub fn load_edge_list(path: impl AsRef<Path>) -> Result<LoadedGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text)
}

pub fn parse_edge_list(text: &str) -> Result<LoadedGraph> {
    let mut raw = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('%') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let mut next = || -> Result<u64> {
            let field = fields.next().ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected two node identifiers".into(),
            })?;
            field.parse::<u64>().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("invalid node identifier {field:?}"),
            })
        };
        let u = next()?;
        let v = next()?;
        raw.push((u, v));
    }
    if raw.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let ids: Vec<u64> = raw
        .iter()
        .flat_map(|&(u, v)| [u, v])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index = |id: u64| ids.binary_search(&id).expect("id collected above");
    let graph = Graph::from_edges(ids.len(), raw.iter().map(|&(u, v)| (index(u), index(v))));
    Ok(LoadedGraph { graph, ids })
}

/// Node-induced subgraph on the largest connected component.
#[derive(Clone, Debug)]
pub struct Component {
    pub graph: Graph,
    /// `old_to_new[u]` is `Some(i)` for nodes kept in the component.
    pub old_to_new: Vec<Option<usize>>,
    /// `new_to_old[i]` is the node of the input graph relabeled to `i`.
    pub new_to_old: Vec<usize>,
}

/// Extracts the largest connected component (ties go to the component with
/// the smallest node), relabeling its nodes densely in ascending order.
pub fn largest_connected_component(g: &Graph) -> Result<Component> {
    if g.n() == 0 {
        return Err(Error::EmptyGraph);
    }
    let (label, count) = g.components();
    let mut sizes = vec![0usize; count];
    for &l in &label {
        sizes[l] += 1;
    }
    let best = (0..count)
        .max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
        .expect("non-empty graph has a component");
    let new_to_old: Vec<usize> = (0..g.n()).filter(|&u| label[u] == best).collect();
    let mut old_to_new = vec![None; g.n()];
    for (i, &u) in new_to_old.iter().enumerate() {
        old_to_new[u] = Some(i);
    }
    let graph = Graph::from_edges(
        new_to_old.len(),
        g.edges().filter_map(|(u, v)| Some((old_to_new[u]?, old_to_new[v]?))),
    );
    Ok(Component {
        graph,
        old_to_new,
        new_to_old,
    })
}

/// Train/validation/test partition of a graph's edges, with matching sets of
/// sampled non-edges.
#[derive(Clone, Debug)]
pub struct EdgeSplit {
    pub train: Graph,
    pub val_edges: Vec<(usize, usize)>,
    pub test_edges: Vec<(usize, usize)>,
    pub val_nonedges: Vec<(usize, usize)>,
    pub test_nonedges: Vec<(usize, usize)>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    seed: u64,
    n: usize,
    val_edges: Vec<[usize; 2]>,
    test_edges: Vec<[usize; 2]>,
    val_nonedges: Vec<[usize; 2]>,
    test_nonedges: Vec<[usize; 2]>,
}

fn to_arrays(pairs: &[(usize, usize)]) -> Vec<[usize; 2]> {
    pairs.iter().map(|&(u, v)| [u, v]).collect()
}

fn from_arrays(pairs: &[[usize; 2]]) -> Vec<(usize, usize)> {
    pairs.iter().map(|&[u, v]| (u, v)).collect()
}

impl EdgeSplit {
    /// Serializes the held-out pairs and the seed. The training graph is not
    /// stored; [`EdgeSplit::from_json`] rebuilds it from the full graph.
    pub fn to_json(&self) -> Result<String> {
        let file = SplitFile {
            seed: self.seed,
            n: self.train.n(),
            val_edges: to_arrays(&self.val_edges),
            test_edges: to_arrays(&self.test_edges),
            val_nonedges: to_arrays(&self.val_nonedges),
            test_nonedges: to_arrays(&self.test_nonedges),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Restores a split given the full graph it was drawn from.
    pub fn from_json(json: &str, full: &Graph) -> Result<Self> {
        let file: SplitFile = serde_json::from_str(json)?;
        if file.n != full.n() {
            return Err(Error::NodeCountMismatch {
                left: file.n,
                right: full.n(),
            });
        }
        let val_edges = from_arrays(&file.val_edges);
        let test_edges = from_arrays(&file.test_edges);
        let held: HashSet<(usize, usize)> = val_edges
            .iter()
            .chain(&test_edges)
            .map(|&(u, v)| canonical(u, v))
            .collect();
        let train = Graph::from_edges(full.n(), full.edges().filter(|e| !held.contains(e)));
        Ok(EdgeSplit {
            train,
            val_edges,
            test_edges,
            val_nonedges: from_arrays(&file.val_nonedges),
            test_nonedges: from_arrays(&file.test_nonedges),
            seed: file.seed,
        })
    }
}

pub(crate) fn canonical(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Holds out `val_frac` and `test_frac` of the edges (rounded to the nearest
/// count) while keeping the training graph connected, and samples as many
/// non-edges for each holdout set.
pub fn split_edges(g: &Graph, val_frac: f64, test_frac: f64, seed: u64) -> Result<EdgeSplit> {
    if !(0.0..1.0).contains(&val_frac)
        || !(0.0..1.0).contains(&test_frac)
        || val_frac + test_frac >= 1.0
    {
        return Err(Error::InvalidArgument(format!(
            "holdout fractions {val_frac} + {test_frac} must be nonnegative and sum below 1"
        )));
    }
    if !g.is_connected() {
        return Err(Error::Split("input graph is not connected".into()));
    }
    let m = g.m();
    let n_val = (val_frac * m as f64).round() as usize;
    let n_test = (test_frac * m as f64).round() as usize;
    let n_hold = n_val + n_test;
    // A connected graph on n nodes keeps at least n - 1 edges.
    if m - n_hold + 1 < g.n() {
        return Err(Error::Split(format!(
            "holding out {n_hold} of {m} edges would disconnect a graph on {} nodes",
            g.n()
        )));
    }
    let n_pairs = g.n() * (g.n() - 1) / 2;
    if n_pairs - m < n_hold {
        return Err(Error::Split(format!(
            "need {n_hold} non-edges but the graph has only {}",
            n_pairs - m
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<(usize, usize)> = g.edges().collect();
    order.shuffle(&mut rng);

    let mut adj: Vec<Vec<usize>> = (0..g.n()).map(|u| g.neighbors(u).to_vec()).collect();
    let mut held = Vec::with_capacity(n_hold);
    for &(u, v) in &order {
        if held.len() == n_hold {
            break;
        }
        remove_neighbor(&mut adj[u], v);
        remove_neighbor(&mut adj[v], u);
        if reachable(&adj, u, v) {
            held.push((u, v));
        } else {
            insert_neighbor(&mut adj[u], v);
            insert_neighbor(&mut adj[v], u);
        }
    }
    if held.len() < n_hold {
        return Err(Error::Split(format!(
            "only {} of {n_hold} edges can be removed without disconnecting the graph",
            held.len()
        )));
    }
    let test_edges = held.split_off(n_val);
    let val_edges = held;

    let mut taken = HashSet::with_capacity(n_hold);
    let mut sample_nonedges = |count: usize, rng: &mut ChaCha8Rng| {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let u = rng.random_range(0..g.n());
            let v = rng.random_range(0..g.n());
            if u == v || g.has_edge(u, v) {
                continue;
            }
            let pair = canonical(u, v);
            if taken.insert(pair) {
                out.push(pair);
            }
        }
        out
    };
    let val_nonedges = sample_nonedges(n_val, &mut rng);
    let test_nonedges = sample_nonedges(n_test, &mut rng);

    let train = Graph::from_edges(
        g.n(),
        adj.iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().map(move |&v| (u, v))),
    );
    Ok(EdgeSplit {
        train,
        val_edges,
        test_edges,
        val_nonedges,
        test_nonedges,
        seed,
    })
}

fn remove_neighbor(list: &mut Vec<usize>, v: usize) {
    if let Ok(i) = list.binary_search(&v) {
        list.remove(i);
    }
}

fn insert_neighbor(list: &mut Vec<usize>, v: usize) {
    if let Err(i) = list.binary_search(&v) {
        list.insert(i, v);
    }
}

fn reachable(adj: &[Vec<usize>], from: usize, to: usize) -> bool {
    let mut seen = vec![false; adj.len()];
    seen[from] = true;
    let mut stack = vec![from];
    while let Some(u) = stack.pop() {
        if u == to {
            return true;
        }
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    false
}

/// Share of the reference graph's edges that are also present in `other`.
pub fn edge_overlap(reference: &Graph, other: &Graph) -> Result<f64> {
    if reference.n() != other.n() {
        return Err(Error::NodeCountMismatch {
            left: reference.n(),
            right: other.n(),
        });
    }
    if reference.m() == 0 {
        return Err(Error::EmptyGraph);
    }
    let shared = reference
        .edges()
        .filter(|&(u, v)| other.has_edge(u, v))
        .count();
    Ok(shared as f64 / reference.m() as f64)
}
