//! Exploration of a two-dimensional latent space through equal-mass bins.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::Array2;
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::assembler::{assemble_graph, scores_for_pairs, symmetrize};
use crate::error::{Error, Result};
use crate::evaluator::{average_precision, roc_auc, LabeledScores};
use crate::graph::{edge_overlap, EdgeSplit, Graph};
use crate::model::Generator;
use crate::stats::{compute_stats, CommunityAssignment};
use crate::walker::{transition_counts, WalkBatch};

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile (Wichura's AS241, about 1e-16 relative
/// accuracy). Returns `±∞` at 0 and 1.
pub fn phi_inv(p: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "probability {p} outside [0, 1]");
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

fn poly(coefficients: &[f64; 8], x: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

#[allow(clippy::excessive_precision)]
const A: [f64; 8] = [
    3.387_132_872_796_366_5,
    133.141_667_891_784_38,
    1_971.590_950_306_551_3,
    13_731.693_765_509_461,
    45_921.953_931_549_87,
    67_265.770_927_008_7,
    33_430.575_583_588_13,
    2_509.080_928_730_122_7,
];
const B: [f64; 8] = [
    1.0,
    42.313_330_701_600_91,
    687.187_007_492_057_9,
    5_394.196_021_424_751,
    21_213.794_301_586_597,
    39_307.895_800_092_71,
    28_729.085_735_721_943,
    5_226.495_278_852_545,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    0.241_780_725_177_450_6,
    0.022_723_844_989_269_184,
    7.745_450_142_783_414e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    0.689_767_334_985_1,
    0.148_103_976_427_480_08,
    0.015_198_666_563_616_457,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    0.296_560_571_828_504_9,
    0.026_532_189_526_576_124,
    0.001_242_660_947_388_078_4,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const F: [f64; 8] = [
    1.0,
    0.599_832_206_555_888,
    0.136_929_880_922_735_8,
    0.014_875_361_290_850_615,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.043_131_013_104_912_3e-15,
];

/// `bins` equal-probability intervals per latent coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentGrid {
    dims: usize,
    bins: usize,
    boundaries: Vec<f64>,
}

impl LatentGrid {
    pub fn new(dims: usize, bins: usize) -> Result<Self> {
        if dims == 0 || bins == 0 {
            return Err(Error::InvalidArgument("latent grid needs at least one dimension and bin".into()));
        }
        let boundaries = (0..=bins).map(|k| phi_inv(k as f64 / bins as f64)).collect();
        Ok(LatentGrid { dims, bins, boundaries })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// `Φ⁻¹(k/B)` for `k = 0..=B`, from `−∞` to `+∞`.
    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Every bin index tuple in row-major order.
    pub fn all_bins(&self) -> Vec<Vec<usize>> {
        let total = self.bins.pow(self.dims as u32);
        (0..total)
            .map(|mut flat| {
                let mut bin = vec![0; self.dims];
                for d in (0..self.dims).rev() {
                    bin[d] = flat % self.bins;
                    flat /= self.bins;
                }
                bin
            })
            .collect()
    }

    fn check_bin(&self, bin: &[usize]) -> Result<()> {
        if bin.len() != self.dims || bin.iter().any(|&k| k >= self.bins) {
            return Err(Error::InvalidArgument(format!(
                "bin {bin:?} is outside a {}-dimensional grid of {} bins",
                self.dims, self.bins
            )));
        }
        Ok(())
    }

    /// Whether `z` lies in the box `(lower, upper]` of `bin`.
    pub fn contains(&self, bin: &[usize], z: &[f64]) -> bool {
        bin.iter()
            .zip(z)
            .all(|(&k, &x)| self.boundaries[k] < x && x <= self.boundaries[k + 1])
    }
}

/// `count` latent vectors drawn from the standard normal restricted to `bin`:
/// each coordinate is `Φ⁻¹(u)` with `u` uniform on the bin's probability
/// interval.
pub fn sample_in_bin(grid: &LatentGrid, bin: &[usize], count: usize, seed: u64) -> Result<Array2<f64>> {
    grid.check_bin(bin)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_in_bin_with(grid, bin, count, &mut rng))
}

fn sample_in_bin_with<R: Rng + ?Sized>(grid: &LatentGrid, bin: &[usize], count: usize, rng: &mut R) -> Array2<f64> {
    let width = 1.0 / grid.bins as f64;
    let mut z = Array2::zeros((count, grid.dims));
    for mut row in z.rows_mut() {
        for (d, &k) in bin.iter().enumerate() {
            let (lower, upper) = (grid.boundaries[k], grid.boundaries[k + 1]);
            row[d] = loop {
                let v: f64 = rng.sample(Open01);
                let x = phi_inv((k as f64 + v) * width);
                // rounding can land exactly on a boundary
                if lower < x && x <= upper {
                    break x;
                }
            };
        }
    }
    z
}

/// The `B` bins along `axis`, the other coordinates fixed to `fixed` (given
/// for the remaining dimensions in order).
pub fn trajectory(grid: &LatentGrid, axis: usize, fixed: &[usize]) -> Result<Vec<Vec<usize>>> {
    if axis >= grid.dims || fixed.len() + 1 != grid.dims {
        return Err(Error::InvalidArgument("trajectory axis or fixed coordinates do not match the grid".into()));
    }
    (0..grid.bins)
        .map(|k| {
            let mut bin = fixed.to_vec();
            bin.insert(axis, k);
            grid.check_bin(&bin)?;
            Ok(bin)
        })
        .collect()
}

/// Inputs shared by every bin's evaluation.
pub struct BinContext<'a> {
    /// Graph the generator was trained on; degrees and edge overlap refer to it.
    pub graph: &'a Graph,
    pub communities: Option<&'a CommunityAssignment>,
    /// Enables validation AUC/AP when present.
    pub split: Option<&'a EdgeSplit>,
}

/// Metrics of one bin. Absent values are undefined for the bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub bin: Vec<usize>,
    pub metrics: BTreeMap<String, Option<f64>>,
    /// Share of visited nodes per community, summing to 1.
    pub community_histogram: Option<Vec<f64>>,
}

/// Walk metrics of the walks generated from `bin`, plus statistics of the
/// graph assembled from their transitions.
pub fn bin_properties(
    generator: &Generator,
    walk_len: usize,
    grid: &LatentGrid,
    walks_per_bin: usize,
    seed: u64,
    ctx: &BinContext<'_>,
) -> Result<Vec<BinReport>> {
    if generator.dims.latent_dim != grid.dims {
        return Err(Error::InvalidArgument(format!(
            "generator latent dimension {} does not match the {}-dimensional grid",
            generator.dims.latent_dim, grid.dims
        )));
    }
    if generator.dims.n != ctx.graph.n() {
        return Err(Error::NodeCountMismatch {
            left: generator.dims.n,
            right: ctx.graph.n(),
        });
    }
    grid.all_bins()
        .into_par_iter()
        .enumerate()
        .map(|(index, bin)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index as u64);
            let z = sample_in_bin_with(grid, &bin, walks_per_bin, &mut rng);
            let walks = generator.sample_from(&z, walk_len, &mut rng)?;
            let assemble_seed = rng.random();
            bin_report(bin, &walks, assemble_seed, ctx)
        })
        .collect()
}

fn bin_report(bin: Vec<usize>, walks: &WalkBatch, seed: u64, ctx: &BinContext<'_>) -> Result<BinReport> {
    let g = ctx.graph;
    let mut metrics: BTreeMap<String, Option<f64>> = BTreeMap::new();
    let mut put = |name: &str, value: Option<f64>| {
        metrics.insert(name.to_owned(), value);
    };
    let count = walks.len() as f64;

    let starts: Vec<usize> = walks.column(0).collect();
    put(
        "avg_start_degree",
        Some(starts.iter().map(|&s| g.degree(s) as f64).sum::<f64>() / count),
    );
    let mut start_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &s in &starts {
        *start_counts.entry(s).or_insert(0) += 1;
    }
    let entropy = start_counts
        .values()
        .map(|&c| {
            let p = c as f64 / count;
            -p * p.ln()
        })
        .sum();
    put("start_node_entropy", Some(entropy));

    let community_histogram = ctx.communities.map(|c| {
        let labels = c.labels();
        let mut same_start = 0.0;
        let mut single = 0.0;
        let mut hist = vec![0.0; c.k()];
        for w in walks.walks() {
            let home = labels[w[0]];
            let inside = w.iter().filter(|&&v| labels[v] == home).count();
            same_start += inside as f64 / w.len() as f64;
            if inside == w.len() {
                single += 1.0;
            }
            for &v in w {
                hist[labels[v]] += 1.0;
            }
        }
        let total: f64 = hist.iter().sum();
        (same_start / count, single / count, hist.iter().map(|h| h / total).collect::<Vec<f64>>())
    });
    put("start_community_share", community_histogram.as_ref().map(|c| c.0));
    put("single_community_share", community_histogram.as_ref().map(|c| c.1));

    let scores = symmetrize(&transition_counts(walks, g.n()));
    let assembled = match assemble_graph(&scores, g.m(), seed) {
        Ok(a) => Some(a),
        Err(Error::IsolatedNode(_)) | Err(Error::NotEnoughPairs { .. }) => None,
        Err(e) => return Err(e),
    };
    let report = assembled.as_ref().map(|a| compute_stats(a, ctx.communities)).transpose()?;
    let r = report.as_ref();
    put("gini", r.and_then(|r| r.gini));
    put("max_degree", r.map(|r| r.max_degree as f64));
    put("assortativity", r.and_then(|r| r.assortativity));
    put("claw_count", r.map(|r| r.claw_count as f64));
    put("wedge_count", r.map(|r| r.wedge_count as f64));
    put("triangle_count", r.map(|r| r.triangle_count as f64));
    put("rel_edge_entropy", r.and_then(|r| r.rel_edge_entropy));
    put("lcc_size", r.map(|r| r.lcc_size as f64));
    put("power_law_exp", r.and_then(|r| r.power_law_exp));
    put(
        "edge_overlap",
        assembled.as_ref().map(|a| edge_overlap(g, a)).transpose()?,
    );

    let (auc, ap) = match ctx.split {
        Some(split) if !split.val_edges.is_empty() && !split.val_nonedges.is_empty() => {
            let pairs: Vec<(usize, usize)> = split.val_edges.iter().chain(&split.val_nonedges).copied().collect();
            let labels = std::iter::repeat_n(true, split.val_edges.len())
                .chain(std::iter::repeat_n(false, split.val_nonedges.len()))
                .collect();
            let ls = LabeledScores::new(scores_for_pairs(&scores, &pairs), labels)?;
            (Some(roc_auc(&ls)?), Some(average_precision(&ls)?))
        }
        _ => (None, None),
    };
    put("val_auc", auc);
    put("val_ap", ap);

    Ok(BinReport {
        bin,
        metrics,
        community_histogram: community_histogram.map(|c| c.2),
    })
}

/// `bin_i,bin_j,metric,value` rows for one metric of a two-dimensional grid;
/// undefined values are left empty.
pub fn heatmap_csv(reports: &[BinReport], metric: &str) -> String {
    let mut out = String::from("bin_i,bin_j,metric,value\n");
    for r in reports {
        let (i, j) = (r.bin[0], r.bin.get(1).copied().unwrap_or(0));
        match r.metrics.get(metric).copied().flatten() {
            Some(v) => writeln!(out, "{i},{j},{metric},{v}"),
            None => writeln!(out, "{i},{j},{metric},"),
        }
        .expect("writing to a String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUANTILES: [(f64, f64); 20] = [
        (1e-12, -7.034483825301131),
        (1e-08, -5.612001244174789),
        (1e-05, -4.264890793922825),
        (0.001, -3.090232306167813),
        (0.01, -2.3263478740408408),
        (0.025, -1.9599639845400545),
        (0.05, -1.6448536269514729),
        (0.1, -1.2815515655446004),
        (0.2, -0.8416212335729142),
        (0.3, -0.5244005127080409),
        (0.4, -0.2533471031357997),
        (0.5, 0.0),
        (0.6, 0.2533471031357997),
        (0.75, 0.6744897501960817),
        (0.9, 1.2815515655446004),
        (0.95, 1.6448536269514722),
        (0.975, 1.959963984540054),
        (0.99, 2.3263478740408408),
        (0.999, 3.090232306167813),
        (0.999999999, 5.997807019601637),
    ];

    #[test]
    fn quantiles_match_table() {
        for (p, x) in QUANTILES {
            assert!((phi_inv(p) - x).abs() <= 1e-9 * x.abs().max(1.0), "p={p}");
            if p > 1e-6 && p < 1.0 - 1e-6 {
                assert!((phi(x) - p).abs() < 1e-14 * p.min(1.0 - p).max(1e-3), "p={p}");
            }
        }
        assert_eq!(phi_inv(0.0), f64::NEG_INFINITY);
        assert_eq!(phi_inv(1.0), f64::INFINITY);
    }

    #[test]
    fn grid_boundaries() {
        let g = LatentGrid::new(2, 2).unwrap();
        assert_eq!(g.boundaries(), &[f64::NEG_INFINITY, 0.0, f64::INFINITY]);
        let g = LatentGrid::new(2, 20).unwrap();
        assert!(g.boundaries().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g.all_bins().len(), 400);
        assert_eq!(g.all_bins()[21], vec![1, 1]);
    }

    #[test]
    fn median_split() {
        let g = LatentGrid::new(2, 2).unwrap();
        let z = sample_in_bin(&g, &[0, 1], 1000, 3).unwrap();
        assert!(z.column(0).iter().all(|&x| x < 0.0));
        assert!(z.column(1).iter().all(|&x| x > 0.0));
        assert_eq!(z, sample_in_bin(&g, &[0, 1], 1000, 3).unwrap());
        assert!(sample_in_bin(&g, &[2, 0], 1, 0).is_err());
    }

    #[test]
    fn trajectories() {
        let g = LatentGrid::new(2, 3).unwrap();
        assert_eq!(trajectory(&g, 0, &[1]).unwrap(), vec![vec![0, 1], vec![1, 1], vec![2, 1]]);
        assert_eq!(trajectory(&g, 1, &[1]).unwrap(), vec![vec![1, 0], vec![1, 1], vec![1, 2]]);
        assert!(trajectory(&g, 2, &[1]).is_err());
    }

    #[test]
    fn heatmap_rows() {
        let mut metrics = BTreeMap::new();
        metrics.insert("gini".to_owned(), Some(0.25));
        metrics.insert("assortativity".to_owned(), None);
        let r = vec![BinReport { bin: vec![1, 2], metrics, community_histogram: None }];
        assert_eq!(heatmap_csv(&r, "gini"), "bin_i,bin_j,metric,value\n1,2,gini,0.25\n");
        assert_eq!(heatmap_csv(&r, "assortativity"), "bin_i,bin_j,metric,value\n1,2,assortativity,\n");
    }
}
