//! Graph statistics for comparing generated graphs with their input.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::pearson;
use crate::graph::{largest_connected_component, Graph};

/// Community id in `0..k` for every node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommunityAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl CommunityAssignment {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(0, |&m| m + 1);
        if k == 0 {
            return Err(Error::InvalidArgument("community assignment is empty".into()));
        }
        Ok(CommunityAssignment { labels, k })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &c in &self.labels {
            s[c] += 1;
        }
        s
    }

    /// Reads `node_id<TAB>community_id` lines for the nodes whose original
    /// ids are `ids` (index = internal node). Community ids are relabeled to
    /// `0..k` in ascending order.
    pub fn load(path: impl AsRef<Path>, ids: &[u64]) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut raw: BTreeMap<u64, u64> = BTreeMap::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: &str| Error::Parse {
                line: line_no + 1,
                message: message.into(),
            };
            let mut fields = line.split_whitespace();
            let (Some(node), Some(comm), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(bad("expected `node_id community_id`"));
            };
            let node = node.parse().map_err(|_| bad("invalid node id"))?;
            let comm = comm.parse().map_err(|_| bad("invalid community id"))?;
            raw.insert(node, comm);
        }
        let mut communities: Vec<u64> = raw.values().copied().collect();
        communities.sort_unstable();
        communities.dedup();
        let labels = ids
            .iter()
            .map(|id| {
                let c = raw
                    .get(id)
                    .ok_or_else(|| Error::InvalidArgument(format!("node {id} has no community label")))?;
                Ok(communities.binary_search(c).expect("collected above"))
            })
            .collect::<Result<Vec<_>>>()?;
        CommunityAssignment::new(labels)
    }
}

/// Statistics of one graph. `None` marks a statistic that is undefined for
/// the graph (for instance assortativity of a regular graph) or a community
/// statistic computed without communities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub n: usize,
    pub m: usize,
    pub max_degree: usize,
    pub assortativity: Option<f64>,
    pub triangle_count: u64,
    pub power_law_exp: Option<f64>,
    pub inter_comm_density: Option<f64>,
    pub intra_comm_density: Option<f64>,
    pub clustering_coeff: Option<f64>,
    pub char_path_len: Option<f64>,
    pub wedge_count: u64,
    pub rel_edge_entropy: Option<f64>,
    pub lcc_size: usize,
    pub claw_count: u64,
    pub gini: Option<f64>,
    pub community_distribution: Option<Vec<f64>>,
}

impl StatsReport {
    /// The statistics that enter the average rank, in table order.
    pub fn ranked_columns(&self) -> [(&'static str, Option<f64>); 8] {
        [
            ("max_degree", Some(self.max_degree as f64)),
            ("assortativity", self.assortativity),
            ("triangle_count", Some(self.triangle_count as f64)),
            ("power_law_exp", self.power_law_exp),
            ("inter_comm_density", self.inter_comm_density),
            ("intra_comm_density", self.intra_comm_density),
            ("clustering_coeff", self.clustering_coeff),
            ("char_path_len", self.char_path_len),
        ]
    }
}

pub fn compute_stats(g: &Graph, communities: Option<&CommunityAssignment>) -> Result<StatsReport> {
    if g.n() == 0 {
        return Err(Error::EmptyGraph);
    }
    if let Some(c) = communities {
        if c.labels.len() != g.n() {
            return Err(Error::NodeCountMismatch {
                left: g.n(),
                right: c.labels.len(),
            });
        }
    }
    let degrees = g.degrees();
    let triangles = triangle_count(g);
    let wedges = wedge_count(&degrees);
    let lcc = largest_connected_component(g)?;
    let (inter, intra, distribution) = match communities {
        Some(c) => {
            let (inter, intra) = community_densities(g, c);
            (Some(inter), Some(intra), Some(community_distribution(g, c)))
        }
        None => (None, None, None),
    };
    Ok(StatsReport {
        n: g.n(),
        m: g.m(),
        max_degree: degrees.iter().copied().max().unwrap_or(0),
        assortativity: assortativity(g),
        triangle_count: triangles,
        power_law_exp: power_law_exponent(&degrees),
        inter_comm_density: inter,
        intra_comm_density: intra,
        clustering_coeff: (wedges > 0).then(|| 3.0 * triangles as f64 / wedges as f64),
        char_path_len: characteristic_path_length(&lcc.graph),
        wedge_count: wedges,
        rel_edge_entropy: relative_edge_entropy(&degrees),
        lcc_size: lcc.graph.n(),
        claw_count: claw_count(&degrees),
        gini: gini(&degrees),
        community_distribution: distribution,
    })
}

/// Counts each triangle once by walking edges `u < v` and common neighbors
/// `w > v`.
pub fn triangle_count(g: &Graph) -> u64 {
    let mut count = 0;
    for u in 0..g.n() {
        let nu = g.neighbors(u);
        for &v in nu.iter().filter(|&&v| v > u) {
            let nv = g.neighbors(v);
            let (mut i, mut j) = (nu.partition_point(|&x| x <= v), nv.partition_point(|&x| x <= v));
            while i < nu.len() && j < nv.len() {
                match nu[i].cmp(&nv[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        count += 1;
                        i += 1;
                        j += 1;
                    }
                }
            }
        }
    }
    count
}

fn choose(n: u64, k: u64) -> u64 {
    if n < k {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// `Σ C(d, 2)`.
pub fn wedge_count(degrees: &[usize]) -> u64 {
    degrees.iter().map(|&d| choose(d as u64, 2)).sum()
}

/// `Σ C(d, 3)`.
pub fn claw_count(degrees: &[usize]) -> u64 {
    degrees.iter().map(|&d| choose(d as u64, 3)).sum()
}

/// Pearson correlation of endpoint degrees over both orientations of every
/// edge; `None` when the degrees along edges have no variance.
pub fn assortativity(g: &Graph) -> Option<f64> {
    let (mut x, mut y) = (Vec::with_capacity(2 * g.m()), Vec::with_capacity(2 * g.m()));
    for (u, v) in g.edges() {
        let (du, dv) = (g.degree(u) as f64, g.degree(v) as f64);
        x.extend([du, dv]);
        y.extend([dv, du]);
    }
    if x.is_empty() {
        return None;
    }
    pearson(&x, &y)
}

/// `1 + n / Σ ln(d/d_min)` over the `n` nodes with positive degree.
pub fn power_law_exponent(degrees: &[usize]) -> Option<f64> {
    let positive: Vec<f64> = degrees.iter().filter(|&&d| d > 0).map(|&d| d as f64).collect();
    let d_min = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let s: f64 = positive.iter().map(|d| (d / d_min).ln()).sum();
    (s > 0.0).then(|| 1.0 + positive.len() as f64 / s)
}

/// Degree entropy normalized by `ln n`, using the degree shares `d/2m` so the
/// value is exactly 1 on regular graphs.
pub fn relative_edge_entropy(degrees: &[usize]) -> Option<f64> {
    let total: usize = degrees.iter().sum();
    if total == 0 || degrees.len() < 2 {
        return None;
    }
    let h: f64 = degrees
        .iter()
        .filter(|&&d| d > 0)
        .map(|&d| {
            let p = d as f64 / total as f64;
            -p * p.ln()
        })
        .sum();
    Some(h / (degrees.len() as f64).ln())
}

/// `2 Σ i·d̂_i / (n Σ d̂_i) − (n + 1)/n` with `d̂` sorted ascending and
/// `i` starting at 1.
pub fn gini(degrees: &[usize]) -> Option<f64> {
    let mut d: Vec<f64> = degrees.iter().map(|&d| d as f64).collect();
    d.sort_by(f64::total_cmp);
    let n = d.len() as f64;
    let total: f64 = d.iter().sum();
    if total == 0.0 {
        return None;
    }
    let weighted: f64 = d.iter().enumerate().map(|(i, x)| (i + 1) as f64 * x).sum();
    Some(2.0 * weighted / (n * total) - (n + 1.0) / n)
}

/// Mean shortest-path length over ordered pairs of distinct nodes of a
/// connected graph; `None` below two nodes.
pub fn characteristic_path_length(g: &Graph) -> Option<f64> {
    let n = g.n();
    if n < 2 {
        return None;
    }
    let mut total = 0u64;
    let mut dist = vec![usize::MAX; n];
    let mut queue = Vec::with_capacity(n);
    for s in 0..n {
        dist.fill(usize::MAX);
        dist[s] = 0;
        queue.clear();
        queue.push(s);
        let mut head = 0;
        while head < queue.len() {
            let u = queue[head];
            head += 1;
            for &v in g.neighbors(u) {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    total += dist[v] as u64;
                    queue.push(v);
                }
            }
        }
    }
    Some(total as f64 / (n * (n - 1)) as f64)
}

/// Average inter-community density over ordered community pairs and average
/// intra-community density.
///
/// Inter: `1/K Σ_j Σ_{k≠j} e(C_j, C_k) / (|C_j|·|C_k|)`.
/// Intra: `1/K Σ_j e(C_j) / C(|C_j|, 2)`, a singleton community
/// contributing 0.
pub fn community_densities(g: &Graph, c: &CommunityAssignment) -> (f64, f64) {
    let k = c.k;
    let sizes = c.sizes();
    let mut between = vec![vec![0u64; k]; k];
    for (u, v) in g.edges() {
        let (a, b) = (c.labels[u], c.labels[v]);
        between[a][b] += 1;
        if a != b {
            between[b][a] += 1;
        }
    }
    let mut inter = 0.0;
    let mut intra = 0.0;
    for j in 0..k {
        for l in 0..k {
            if l != j && sizes[j] > 0 && sizes[l] > 0 {
                inter += between[j][l] as f64 / (sizes[j] * sizes[l]) as f64;
            }
        }
        let pairs = choose(sizes[j] as u64, 2);
        if pairs > 0 {
            intra += between[j][j] as f64 / pairs as f64;
        }
    }
    (inter / k as f64, intra / k as f64)
}

/// Share of edge endpoints in each community, summing to 1.
pub fn community_distribution(g: &Graph, c: &CommunityAssignment) -> Vec<f64> {
    let mut share = vec![0.0; c.k];
    let total = 2.0 * g.m() as f64;
    if total == 0.0 {
        return share;
    }
    for u in 0..g.n() {
        share[c.labels[u]] += g.degree(u) as f64 / total;
    }
    share
}

/// Per-statistic ranks of each candidate by absolute deviation from the
/// reference, and each candidate's mean rank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// Statistics that were ranked (defined for the reference and every
    /// candidate).
    pub statistics: Vec<String>,
    /// `ranks[c][s]`: rank of candidate `c` on statistic `s`, 1 = closest.
    pub ranks: Vec<Vec<f64>>,
    pub mean_rank: Vec<f64>,
}

/// Ranks candidates per statistic; ties share the best rank. Statistics
/// undefined for the reference or any candidate are skipped for everyone.
pub fn compare_reports(reference: &StatsReport, candidates: &[StatsReport]) -> Result<Ranking> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidates to rank".into()));
    }
    let reference_cols = reference.ranked_columns();
    let candidate_cols: Vec<_> = candidates.iter().map(StatsReport::ranked_columns).collect();
    let mut statistics = Vec::new();
    let mut ranks = vec![Vec::new(); candidates.len()];
    for (s, &(name, reference_value)) in reference_cols.iter().enumerate() {
        let Some(r) = reference_value else { continue };
        let deviations: Option<Vec<f64>> = candidate_cols.iter().map(|c| c[s].1.map(|v| (v - r).abs())).collect();
        let Some(deviations) = deviations else { continue };
        statistics.push(name.to_owned());
        for (c, &dev) in deviations.iter().enumerate() {
            let better = deviations.iter().filter(|&&d| d < dev).count();
            ranks[c].push((better + 1) as f64);
        }
    }
    let mean_rank = ranks
        .iter()
        .map(|r| if r.is_empty() { f64::NAN } else { r.iter().sum::<f64>() / r.len() as f64 })
        .collect();
    Ok(Ranking {
        statistics,
        ranks,
        mean_rank,
    })
}

/// One CSV row per report in table column order, followed by the average
/// rank for candidates. Undefined values are left empty.
pub fn comparison_csv(
    reference: (&str, &StatsReport),
    candidates: &[(&str, &StatsReport)],
) -> Result<String> {
    let reports: Vec<StatsReport> = candidates.iter().map(|(_, r)| (*r).clone()).collect();
    let ranking = compare_reports(reference.1, &reports)?;
    let mut out = String::from("graph");
    for (name, _) in reference.1.ranked_columns() {
        write!(out, ",{name}").expect("writing to a String");
    }
    out.push_str(",average_rank\n");
    let row = |out: &mut String, name: &str, report: &StatsReport, rank: Option<f64>| {
        out.push_str(name);
        for (_, value) in report.ranked_columns() {
            match value {
                Some(v) => write!(out, ",{v}").expect("writing to a String"),
                None => out.push(','),
            }
        }
        match rank {
            Some(r) => writeln!(out, ",{r:.2}").expect("writing to a String"),
            None => out.push_str(",\n"),
        }
    };
    row(&mut out, reference.0, reference.1, None);
    for (i, (name, report)) in candidates.iter().enumerate() {
        row(&mut out, name, report, Some(ranking.mean_rank[i]));
    }
    Ok(out)
}
