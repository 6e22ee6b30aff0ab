//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

pub mod gradcheck;

use std::collections::BTreeSet;

use netwalk::stats::{compute_stats, CommunityAssignment};
use netwalk::walker::{WalkConfig, WalkSampler};
use netwalk::Graph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, edges)
}

pub fn adjacency(g: &Graph) -> Vec<Vec<bool>> {
    let mut a = vec![vec![false; g.n()]; g.n()];
    for (u, v) in g.edges() {
        a[u][v] = true;
        a[v][u] = true;
    }
    a
}

pub fn degrees(a: &[Vec<bool>]) -> Vec<usize> {
    a.iter().map(|row| row.iter().filter(|&&x| x).count()).collect()
}

pub fn triangles(a: &[Vec<bool>]) -> u64 {
    let n = a.len();
    let mut t = 0;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if a[i][j] && a[j][k] && a[i][k] {
                    t += 1;
                }
            }
        }
    }
    t
}

/// Stars with `leaves` leaves, counted by enumerating leaf sets.
pub fn stars(a: &[Vec<bool>], leaves: usize) -> u64 {
    let mut count = 0;
    for row in a {
        let nbrs: Vec<usize> = (0..a.len()).filter(|&j| row[j]).collect();
        count += subsets(nbrs.len(), leaves);
    }
    count
}

fn subsets(n: usize, k: usize) -> u64 {
    fn go(start: usize, n: usize, k: usize) -> u64 {
        if k == 0 {
            return 1;
        }
        (start..n).map(|i| go(i + 1, n, k - 1)).sum()
    }
    go(0, n, k)
}

/// Newman's edge-list formula.
pub fn assortativity(a: &[Vec<bool>]) -> Option<f64> {
    let d = degrees(a);
    let (mut m, mut s_jk, mut s_half, mut s_sq) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            if a[i][j] {
                let (x, y) = (d[i] as f64, d[j] as f64);
                m += 1.0;
                s_jk += x * y;
                s_half += 0.5 * (x + y);
                s_sq += 0.5 * (x * x + y * y);
            }
        }
    }
    if m == 0.0 {
        return None;
    }
    let mean = s_half / m;
    let den = s_sq / m - mean * mean;
    (den.abs() > 1e-12).then(|| (s_jk / m - mean * mean) / den)
}

pub fn gini(d: &[usize]) -> Option<f64> {
    let n = d.len() as f64;
    let mean = d.iter().sum::<usize>() as f64 / n;
    if mean == 0.0 {
        return None;
    }
    let mut diff = 0.0;
    for &x in d {
        for &y in d {
            diff += (x as f64 - y as f64).abs();
        }
    }
    Some(diff / (2.0 * n * n * mean))
}

pub fn relative_entropy(d: &[usize]) -> Option<f64> {
    let total = d.iter().sum::<usize>() as f64;
    if total == 0.0 || d.len() < 2 {
        return None;
    }
    let h: f64 = d.iter().filter(|&&x| x > 0).map(|&x| x as f64 / total).map(|p| -p * p.ln()).sum();
    Some(h / (d.len() as f64).ln())
}

pub fn power_law(d: &[usize]) -> Option<f64> {
    let pos: Vec<f64> = d.iter().filter(|&&x| x > 0).map(|&x| x as f64).collect();
    let min = pos.iter().copied().fold(f64::INFINITY, f64::min);
    let s: f64 = pos.iter().map(|x| (x / min).ln()).sum();
    (s > 0.0).then(|| 1.0 + pos.len() as f64 / s)
}

/// Nodes of the largest component, the smallest label winning ties.
pub fn largest_component(a: &[Vec<bool>]) -> Vec<usize> {
    let n = a.len();
    let mut label: Vec<usize> = (0..n).collect();
    // relabel until stable
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if a[i][j] && label[j] < label[i] {
                    label[i] = label[j];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut best: Vec<usize> = Vec::new();
    for root in 0..n {
        let members: Vec<usize> = (0..n).filter(|&i| label[i] == root).collect();
        if members.len() > best.len() {
            best = members;
        }
    }
    best
}

/// Floyd–Warshall mean distance over ordered pairs of the largest component.
pub fn char_path_len(a: &[Vec<bool>]) -> Option<f64> {
    let nodes = largest_component(a);
    let k = nodes.len();
    if k < 2 {
        return None;
    }
    let inf = usize::MAX / 4;
    let mut dist = vec![vec![inf; k]; k];
    for (i, &u) in nodes.iter().enumerate() {
        dist[i][i] = 0;
        for (j, &v) in nodes.iter().enumerate() {
            if a[u][v] {
                dist[i][j] = 1;
            }
        }
    }
    for m in 0..k {
        for i in 0..k {
            for j in 0..k {
                if dist[i][m] + dist[m][j] < dist[i][j] {
                    dist[i][j] = dist[i][m] + dist[m][j];
                }
            }
        }
    }
    let total: usize = dist.iter().flatten().sum();
    Some(total as f64 / (k * (k - 1)) as f64)
}

/// Inter and intra community densities by enumerating node pairs.
pub fn community_densities(a: &[Vec<bool>], labels: &[usize], k: usize) -> (f64, f64) {
    let mut inter = 0.0;
    let mut intra = 0.0;
    for c in 0..k {
        for e in 0..k {
            let (mut edges, mut pairs) = (0.0, 0.0);
            for u in 0..a.len() {
                for v in 0..a.len() {
                    let counted = if c == e { u < v } else { true };
                    if counted && labels[u] == c && labels[v] == e {
                        pairs += 1.0;
                        if a[u][v] {
                            edges += 1.0;
                        }
                    }
                }
            }
            if pairs > 0.0 {
                if c == e {
                    intra += edges / pairs;
                } else {
                    inter += edges / pairs;
                }
            }
        }
    }
    (inter / k as f64, intra / k as f64)
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300) || a == b
}

pub fn close_opt(a: Option<f64>, b: Option<f64>, rel: f64) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => close(x, y, rel),
        (None, None) => true,
        _ => false,
    }
}

/// Connected graphs on five nodes, one per isomorphism class.
pub fn connected_five_node_graphs() -> Vec<Graph> {
    let pairs: Vec<(usize, usize)> = (0..5).flat_map(|u| (u + 1..5).map(move |v| (u, v))).collect();
    let perms = permutations(5);
    let mut seen = BTreeSet::new();
    let mut graphs = Vec::new();
    for mask in 0u32..1 << pairs.len() {
        let edges: Vec<(usize, usize)> = (0..pairs.len()).filter(|&i| mask >> i & 1 == 1).map(|i| pairs[i]).collect();
        let g = Graph::from_edges(5, edges.iter().copied());
        if !g.is_connected() {
            continue;
        }
        let canonical = perms
            .iter()
            .map(|p| {
                let mut e: Vec<(usize, usize)> = edges.iter().map(|&(u, v)| (p[u].min(p[v]), p[u].max(p[v]))).collect();
                e.sort_unstable();
                e
            })
            .min()
            .expect("nonempty");
        if seen.insert(canonical) {
            graphs.push(g);
        }
    }
    graphs
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..n {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Next-step law given `(prev, cur)`, from the walk definition.
pub fn second_order_law(g: &Graph, prev: usize, cur: usize, p: f64, q: f64) -> Vec<f64> {
    let mut w = vec![0.0; g.n()];
    for &x in g.neighbors(cur) {
        w[x] = if x == prev {
            1.0 / p
        } else if g.has_edge(prev, x) {
            1.0
        } else {
            1.0 / q
        };
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// Pearson chi-square statistic and its upper-tail p-value.
pub fn chi_square(observed: &[f64], expected: &[f64]) -> (f64, f64) {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let mut stat = 0.0;
    let mut cells = 0;
    for (o, e) in observed.iter().zip(expected) {
        if *e > 0.0 {
            stat += (o - e) * (o - e) / e;
            cells += 1;
        }
    }
    let dist = ChiSquared::new((cells - 1) as f64).expect("at least two cells");
    (stat, 1.0 - dist.cdf(stat))
}

/// Largest total-variation distance between empirical and analytic next-step
/// laws over every directed edge `(prev, cur)` of `g`, `draws` steps each.
pub fn max_transition_tv(g: &Graph, p: f64, q: f64, draws: usize, seed: u64) -> f64 {
    let cfg = WalkConfig { walk_len: 2, p, q, batch_size: 1 };
    let mut s = WalkSampler::new(g, cfg, seed).expect("valid walk settings");
    let mut worst = 0.0f64;
    for (prev, cur) in g.edges().flat_map(|(u, v)| [(u, v), (v, u)]) {
        let mut counts = vec![0.0; g.n()];
        for _ in 0..draws {
            counts[s.step(Some(prev), cur).expect("cur has neighbors")] += 1.0;
        }
        let law = second_order_law(g, prev, cur, p, q);
        let tv = 0.5 * counts.iter().zip(&law).map(|(c, l)| (c / draws as f64 - l).abs()).sum::<f64>();
        worst = worst.max(tv);
    }
    worst
}

/// The random graph checked for `seed`: `n = 5 + 7·seed mod 46` nodes,
/// edge probability cycling through 0.1, 0.3 and 0.5, four communities.
pub fn oracle_case(seed: u64) -> (Graph, Vec<usize>) {
    let n = 5 + (seed as usize * 7) % 46;
    let p = [0.1, 0.3, 0.5][seed as usize % 3];
    let labels = (0..n).map(|u| (u * 3 + seed as usize) % 4).collect();
    (erdos_renyi(n, p, seed), labels)
}

/// Compares every statistic of [`oracle_case`]`(seed)` with its brute-force
/// value: integers exactly, reals to 1e-9 relative.
pub fn stats_match_oracles(seed: u64) -> Result<(), String> {
    let (g, labels) = oracle_case(seed);
    let a = adjacency(&g);
    let d = degrees(&a);
    let c = CommunityAssignment::new(labels.clone()).map_err(|e| e.to_string())?;
    let r = compute_stats(&g, Some(&c)).map_err(|e| e.to_string())?;
    let t = triangles(&a);
    let wedges = stars(&a, 2);
    let mut bad = Vec::new();
    let mut exact = |name: &str, got: u64, want: u64| {
        if got != want {
            bad.push(format!("{name}: {got} vs {want}"));
        }
    };
    exact("max_degree", r.max_degree as u64, d.iter().copied().max().unwrap_or(0) as u64);
    exact("triangle_count", r.triangle_count, t);
    exact("wedge_count", r.wedge_count, wedges);
    exact("claw_count", r.claw_count, stars(&a, 3));
    exact("lcc_size", r.lcc_size as u64, largest_component(&a).len() as u64);
    let (inter, intra) = community_densities(&a, &labels, c.k());
    let clustering = (wedges > 0).then(|| 3.0 * t as f64 / wedges as f64);
    let reals = [
        ("assortativity", r.assortativity, assortativity(&a)),
        ("power_law_exp", r.power_law_exp, power_law(&d)),
        ("gini", r.gini, gini(&d)),
        ("rel_edge_entropy", r.rel_edge_entropy, relative_entropy(&d)),
        ("char_path_len", r.char_path_len, char_path_len(&a)),
        ("clustering_coeff", r.clustering_coeff, clustering),
        ("inter_comm_density", r.inter_comm_density, Some(inter)),
        ("intra_comm_density", r.intra_comm_density, Some(intra)),
    ];
    for (name, got, want) in reals {
        if !close_opt(got, want, 1e-9) {
            bad.push(format!("{name}: {got:?} vs {want:?}"));
        }
    }
    if let Some(shares) = &r.community_distribution {
        if g.m() > 0 && (shares.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            bad.push("community shares do not sum to 1".into());
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(format!("seed {seed}: {}", bad.join("; ")))
    }
}
