//! Link-prediction metrics and the Adamic/Adar baseline.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeSplit, Graph};

/// Scores paired with binary labels (`true` = edge).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledScores {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl LabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::InvalidArgument("scores contain NaN".into()));
        }
        let positives = labels.iter().filter(|&&l| l).count();
        if positives == 0 || positives == labels.len() {
            return Err(Error::SingleClass);
        }
        Ok(LabeledScores { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// Mann–Whitney AUC with ties counted as one half.
pub fn roc_auc(ls: &LabeledScores) -> Result<f64> {
    let ranks = average_ranks(&ls.scores);
    let pos = ls.positives() as f64;
    let neg = ls.labels.len() as f64 - pos;
    let rank_sum: f64 = ranks.iter().zip(&ls.labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    Ok((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

/// Mean precision at the rank of each positive, ranking by descending score
/// with ties kept in input order.
pub fn average_precision(ls: &LabeledScores) -> Result<f64> {
    let mut order: Vec<usize> = (0..ls.scores.len()).collect();
    order.sort_by(|&a, &b| ls.scores[b].total_cmp(&ls.scores[a]));
    let mut hits = 0.0;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if ls.labels[i] {
            hits += 1.0;
            sum += hits / (rank + 1) as f64;
        }
    }
    Ok(sum / hits)
}

/// `Σ_{w ∈ N(u) ∩ N(v)} 1 / ln d(w)` for each pair.
pub fn adamic_adar(g: &Graph, pairs: &[(usize, usize)]) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(u, v)| {
            let (a, b) = (g.neighbors(u), g.neighbors(v));
            let (mut i, mut j, mut s) = (0, 0, 0.0);
            while i < a.len() && j < b.len() {
                match a[i].cmp(&b[j]) {
                    Ordering::Less => i += 1,
                    Ordering::Greater => j += 1,
                    Ordering::Equal => {
                        s += 1.0 / (g.degree(a[i]) as f64).ln();
                        i += 1;
                        j += 1;
                    }
                }
            }
            s
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Holdout {
    Val,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkPrediction {
    pub auc: f64,
    pub ap: f64,
}

/// Scores the held-out edges (label 1) and non-edges (label 0) of `split`.
pub fn evaluate_link_prediction(
    scores: impl Fn(&[(usize, usize)]) -> Vec<f64>,
    split: &EdgeSplit,
    which: Holdout,
) -> Result<LinkPrediction> {
    let (edges, nonedges) = match which {
        Holdout::Val => (&split.val_edges, &split.val_nonedges),
        Holdout::Test => (&split.test_edges, &split.test_nonedges),
    };
    if edges.is_empty() || nonedges.is_empty() {
        return Err(Error::InvalidArgument("holdout set is empty".into()));
    }
    let pairs: Vec<(usize, usize)> = edges.iter().chain(nonedges).copied().collect();
    let values = scores(&pairs);
    if values.len() != pairs.len() {
        return Err(Error::InvalidArgument("scorer returned the wrong number of scores".into()));
    }
    let labels = std::iter::repeat_n(true, edges.len())
        .chain(std::iter::repeat_n(false, nonedges.len()))
        .collect();
    let ls = LabeledScores::new(values, labels)?;
    Ok(LinkPrediction {
        auc: roc_auc(&ls)?,
        ap: average_precision(&ls)?,
    })
}

/// One row of a link-prediction results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub dataset: String,
    pub auc: f64,
    pub ap: f64,
}

/// CSV with one row per method and `dataset AUC`, `dataset AP` column pairs,
/// datasets in first-seen order.
pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut datasets: Vec<&str> = Vec::new();
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let mut out = String::from("method");
    for d in &datasets {
        out.push_str(&format!(",{d} AUC,{d} AP"));
    }
    out.push('\n');
    for m in &methods {
        out.push_str(m);
        for d in &datasets {
            match rows.iter().find(|r| r.method == *m && r.dataset == *d) {
                Some(r) => out.push_str(&format!(",{:.2},{:.2}", 100.0 * r.auc, 100.0 * r.ap)),
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

/// Spearman's rho using average ranks for ties.
pub fn rank_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument("rank correlation needs equal lengths".into()));
    }
    if a.len() < 3 {
        return Err(Error::InvalidArgument("rank correlation needs at least 3 values".into()));
    }
    pearson(&average_ranks(a), &average_ranks(b)).ok_or(Error::Undefined("rank correlation with constant input"))
}

pub(crate) fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// 1-based ranks in ascending order, ties sharing their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}
