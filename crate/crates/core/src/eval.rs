//! Clustering metrics with optimal label matching, and the temporal
//! link-prediction protocol.

use crate::error::{input, Result};
use crate::matrix::{dot, Matrix};
use crate::scalar::Scalar;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};

/// Dense relabeling of arbitrary ids, in order of first appearance after sorting.
fn compress(labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let dense = labels.iter().map(|l| ids.binary_search(l).expect("present")).collect();
    (dense, ids)
}

fn contingency(pred: &[usize], truth: &[usize]) -> (Vec<Vec<u64>>, Vec<usize>, Vec<usize>) {
    let (p, pred_ids) = compress(pred);
    let (t, truth_ids) = compress(truth);
    let mut table = vec![vec![0u64; truth_ids.len()]; pred_ids.len()];
    for (&a, &b) in p.iter().zip(&t) {
        table[a][b] += 1;
    }
    (table, pred_ids, truth_ids)
}

/// Minimum-cost perfect assignment on a square matrix (Kuhn–Munkres with
/// potentials). Returns `col_of_row`.
fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays; index 0 is a sentinel column
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0; n];
    for j in 1..=n {
        if row_of_col[j] > 0 {
            col_of_row[row_of_col[j] - 1] = j - 1;
        }
    }
    col_of_row
}

/// One-to-one cluster → label assignment maximizing agreement.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatching {
    /// Predicted cluster id → truth label. Clusters left without a label
    /// (more clusters than labels) are absent.
    pub mapping: BTreeMap<usize, usize>,
    /// Number of nodes whose mapped cluster equals their label.
    pub agreement: usize,
}

pub fn match_labels(pred: &[usize], truth: &[usize]) -> Result<LabelMatching> {
    if pred.len() != truth.len() {
        return input(format!("prediction has {} entries, truth has {}", pred.len(), truth.len()));
    }
    let (table, pred_ids, truth_ids) = contingency(pred, truth);
    let size = pred_ids.len().max(truth_ids.len());
    let max = table.iter().flatten().copied().max().unwrap_or(0) as i64;
    let cost: Vec<Vec<i64>> = (0..size)
        .map(|i| (0..size).map(|j| max - table.get(i).and_then(|r| r.get(j)).map_or(0, |&c| c as i64)).collect())
        .collect();
    let assignment = hungarian(&cost);
    let mut mapping = BTreeMap::new();
    let mut agreement = 0;
    for (i, &j) in assignment.iter().enumerate() {
        if i < pred_ids.len() && j < truth_ids.len() {
            mapping.insert(pred_ids[i], truth_ids[j]);
            agreement += table[i][j] as usize;
        }
    }
    Ok(LabelMatching { mapping, agreement })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringScores {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub f1: f64,
}

pub fn clustering_metrics(pred: &[usize], truth: &[usize]) -> Result<ClusteringScores> {
    if pred.is_empty() {
        return input("cannot score an empty clustering");
    }
    let m = match_labels(pred, truth)?;
    let n = pred.len() as f64;
    let acc = m.agreement as f64 / n;
    Ok(ClusteringScores { acc, nmi: nmi(pred, truth), ari: ari(pred, truth), f1: macro_f1(pred, truth, &m) })
}

fn entropy(counts: impl Iterator<Item = u64>, n: f64) -> f64 {
    counts.filter(|&c| c > 0).map(|c| {
        let p = c as f64 / n;
        -p * p.ln()
    }).sum()
}

/// Mutual information normalized by the arithmetic mean of the entropies;
/// 0 when both entropies vanish.
pub fn nmi(pred: &[usize], truth: &[usize]) -> f64 {
    let (table, _, _) = contingency(pred, truth);
    let n = pred.len() as f64;
    let rows: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..table.first().map_or(0, Vec::len)).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for (i, r) in table.iter().enumerate() {
        for (j, &c) in r.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (n * c / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    let denom = 0.5 * (entropy(rows.into_iter(), n) + entropy(cols.into_iter(), n));
    if denom <= 0.0 {
        return 0.0;
    }
    (mi / denom).clamp(0.0, 1.0)
}

fn pairs(c: u64) -> f64 {
    (c as f64) * (c as f64 - 1.0) / 2.0
}

/// Adjusted Rand index; 1 in the degenerate case where both partitions are
/// trivial in the same way (the adjusted form is 0/0 there).
pub fn ari(pred: &[usize], truth: &[usize]) -> f64 {
    let (table, _, _) = contingency(pred, truth);
    let n = pred.len() as u64;
    let index: f64 = table.iter().flatten().map(|&c| pairs(c)).sum();
    let sum_a: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let sum_b: f64 = (0..table.first().map_or(0, Vec::len)).map(|j| pairs(table.iter().map(|r| r[j]).sum())).sum();
    let total = pairs(n);
    let expected = if total > 0.0 { sum_a * sum_b / total } else { 0.0 };
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom == 0.0 {
        return 1.0;
    }
    (index - expected) / denom
}

/// F1 per truth class after matching, averaged over classes.
fn macro_f1(pred: &[usize], truth: &[usize], m: &LabelMatching) -> f64 {
    let mut classes: Vec<usize> = truth.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mapped: Vec<Option<usize>> = pred.iter().map(|p| m.mapping.get(p).copied()).collect();
    let mut total = 0.0;
    for &c in &classes {
        let tp = mapped.iter().zip(truth).filter(|(p, &t)| **p == Some(c) && t == c).count() as f64;
        let predicted = mapped.iter().filter(|p| **p == Some(c)).count() as f64;
        let actual = truth.iter().filter(|&&t| t == c).count() as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = tp / actual;
        if precision + recall > 0.0 {
            total += 2.0 * precision * recall / (precision + recall);
        }
    }
    total / classes.len() as f64
}

/// Unordered pair `(min, max)`.
fn canon((u, v): (usize, usize)) -> (usize, usize) {
    (u.min(v), u.max(v))
}

/// `|E_pos|` distinct non-edges sampled uniformly from the complement of
/// `E_pos` (self-loops excluded).
pub fn sample_negative_edges<R: Rng + ?Sized>(positives: &[(usize, usize)], n: usize, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    let pos: HashSet<(usize, usize)> = positives.iter().map(|&e| canon(e)).collect();
    if pos.iter().any(|&(u, v)| v >= n || u == v) {
        return input("positive edge outside the node range or a self-loop");
    }
    let want = positives.len();
    let all_pairs = n * n.saturating_sub(1) / 2;
    let capacity = all_pairs - pos.len();
    if want > capacity {
        return input(format!("need {want} negative edges but only {capacity} non-edges exist"));
    }
    // dense demand: enumerate the complement instead of rejecting forever
    if 2 * want > capacity {
        let complement: Vec<(usize, usize)> =
            (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).filter(|e| !pos.contains(e)).collect();
        return Ok(index::sample(rng, complement.len(), want).into_iter().map(|i| complement[i]).collect());
    }
    let mut chosen = HashSet::with_capacity(want);
    let mut out = Vec::with_capacity(want);
    while out.len() < want {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u == v {
            continue;
        }
        let e = canon((u, v));
        if !pos.contains(&e) && chosen.insert(e) {
            out.push(e);
        }
    }
    Ok(out)
}

/// `φ_uᵀ φ_v`.
pub fn link_score<T: Scalar>(phi: &Matrix<T>, u: usize, v: usize) -> T {
    dot(phi.row(u), phi.row(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankScores {
    pub auc: f64,
    pub ap: f64,
}

/// ROC AUC (ties count one half) and average precision (tied scores form
/// one threshold step).
pub fn rank_metrics(positive: &[f64], negative: &[f64]) -> Result<RankScores> {
    if positive.is_empty() || negative.is_empty() {
        return input("rank metrics need at least one positive and one negative score");
    }
    if positive.iter().chain(negative).any(|s| s.is_nan()) {
        return input("NaN score");
    }
    Ok(RankScores { auc: auc(positive, negative), ap: average_precision(positive, negative) })
}

fn auc(positive: &[f64], negative: &[f64]) -> f64 {
    let mut neg = negative.to_vec();
    neg.sort_by(f64::total_cmp);
    // twice the Mann–Whitney count, kept integral
    let mut doubled: u64 = 0;
    for &s in positive {
        let below = neg.partition_point(|&x| x < s);
        let tied = neg.partition_point(|&x| x <= s) - below;
        doubled += 2 * below as u64 + tied as u64;
    }
    doubled as f64 / (2.0 * positive.len() as f64 * negative.len() as f64)
}

fn average_precision(positive: &[f64], negative: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> =
        positive.iter().map(|&s| (s, true)).chain(negative.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total_pos = positive.len() as f64;
    let (mut tp, mut fp, mut ap) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let mut group_pos = 0.0;
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                group_pos += 1.0;
            } else {
                fp += 1.0;
            }
            j += 1;
        }
        tp += group_pos;
        if group_pos > 0.0 {
            ap += (group_pos / total_pos) * tp / (tp + fp);
        }
        i = j;
    }
    ap
}

/// `Σ wᵢ xᵢ / Σ wᵢ`; `None` when the weights sum to zero.
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> Option<f64> {
    let w: f64 = weights.iter().sum();
    (w > 0.0).then(|| values.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn swapped_labels_match_perfectly() {
        let m = match_labels(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(m.mapping, BTreeMap::from([(0, 1), (1, 0)]));
        assert_eq!(clustering_metrics(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap().acc, 1.0);
        let id = match_labels(&[2, 0, 1], &[2, 0, 1]).unwrap();
        assert!(id.mapping.iter().all(|(a, b)| a == b));
    }

    #[test]
    fn identical_partitions_score_one() {
        let p = [0, 1, 1, 2, 2, 2, 0];
        let s = clustering_metrics(&p, &p).unwrap();
        assert!((s.acc - 1.0).abs() < 1e-12 && (s.nmi - 1.0).abs() < 1e-12);
        assert!((s.ari - 1.0).abs() < 1e-12 && (s.f1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_cluster_against_balanced_truth() {
        let truth = [0, 0, 0, 1, 1, 1];
        let s = clustering_metrics(&[5; 6], &truth).unwrap();
        assert_eq!(s.acc, 0.5);
        assert_eq!(s.nmi, 0.0);
        assert!(s.ari.abs() < 1e-15);
        // matched class: P = 1/2, R = 1, F1 = 2/3; the other class scores 0
        assert!((s.f1 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn more_clusters_than_labels() {
        let m = match_labels(&[0, 1, 2, 3], &[0, 0, 1, 1]).unwrap();
        assert_eq!(m.mapping.len(), 2);
        assert_eq!(m.agreement, 2);
        assert!(match_labels(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn nmi_symmetric_and_hand_value() {
        let a = [0, 0, 1, 1];
        let b = [0, 0, 0, 1];
        assert!((nmi(&a, &b) - nmi(&b, &a)).abs() < 1e-15);
        // MI = ½ln2 + ¼ln(2/3)·… computed from the contingency table by hand
        let n = 4.0f64;
        let mi = 0.5 * (n * 2.0 / (2.0 * 3.0)).ln() + 0.25 * (n * 1.0 / (2.0 * 3.0)).ln() + 0.25 * (n * 1.0 / (2.0 * 1.0)).ln();
        let ha = 2f64.ln();
        let hb = -(0.75 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        assert!((nmi(&a, &b) - mi / (0.5 * (ha + hb))).abs() < 1e-12);
    }

    #[test]
    fn degenerate_single_cluster_conventions() {
        assert_eq!(nmi(&[0, 0, 0], &[1, 1, 1]), 0.0);
        assert_eq!(ari(&[0, 0, 0], &[1, 1, 1]), 1.0);
    }

    #[test]
    fn negative_edges_small_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_negative_edges(&[(0, 1), (1, 2)], 3, &mut rng).is_err());
        for _ in 0..20 {
            let neg = sample_negative_edges(&[(0, 1)], 3, &mut rng).unwrap();
            assert_eq!(neg.len(), 1);
            assert!(neg[0] == (0, 2) || neg[0] == (1, 2));
        }
        let pos: Vec<_> = (0..40).map(|i| (i, i + 1)).collect();
        let neg = sample_negative_edges(&pos, 41, &mut rng).unwrap();
        let set: HashSet<_> = neg.iter().copied().collect();
        assert_eq!(set.len(), 40);
        assert!(neg.iter().all(|&(u, v)| u < v && v != u + 1));
    }

    #[test]
    fn link_scores() {
        let phi = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.25; 4][..2].to_vec()]);
        assert_eq!(link_score(&phi, 0, 1), 1.0);
        assert_eq!(link_score(&phi, 0, 2), 0.0);
        let uni = Matrix::from_rows(&[vec![0.25; 4], vec![0.25; 4]]);
        assert_eq!(link_score(&uni, 0, 1), 0.25);
    }

    #[test]
    fn rank_metric_edge_cases() {
        let r = rank_metrics(&[0.9, 0.8], &[0.1, 0.2]).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.ap, 1.0);
        let tie = rank_metrics(&[0.5, 0.5], &[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(tie.auc, 0.5);
        assert!((tie.ap - 0.4).abs() < 1e-15);
        assert!(rank_metrics(&[], &[1.0]).is_err());
    }

    #[test]
    fn ap_without_ties_is_mean_precision_at_positive_ranks() {
        // ranking: p n p n p
        let r = rank_metrics(&[5.0, 3.0, 1.0], &[4.0, 2.0]).unwrap();
        let expected = (1.0 + 2.0 / 3.0 + 3.0 / 5.0) / 3.0;
        assert!((r.ap - expected).abs() < 1e-15);
    }

    #[test]
    fn weighted_mean_values() {
        assert_eq!(weighted_mean(&[1.0, 0.0], &[3.0, 1.0]), Some(0.75));
        assert_eq!(weighted_mean(&[1.0], &[0.0]), None);
    }
}
