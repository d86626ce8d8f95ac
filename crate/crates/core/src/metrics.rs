//! Posterior-quality metrics against a reference graph.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::acquisition::predictive;
use crate::error::Result;
use crate::expert::{CategoricalDist3, ExpertParams};
use crate::features::FeatureTable;
use crate::graph::{ordered_pairs, BinaryGraph, Label};
use crate::posterior::ParticleSet;
use crate::scalar::Scalar;

/// How a reversed edge is counted by [`shd_posterior`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShdMode {
    /// Ordered-entry mismatches: a reversal costs 2.
    #[default]
    Formula,
    /// Per unordered pair: any difference costs 1.
    Flip1,
}

/// Mean predictive entropy over `pairs`; NaN for an empty list.
pub fn avg_predictive_entropy<T: Scalar>(
    pset: &ParticleSet<T>,
    pairs: &[(usize, usize)],
    params: &ExpertParams<T>,
    features: Option<&FeatureTable<T>>,
) -> T {
    if pairs.is_empty() {
        return T::nan();
    }
    let total: T = pairs.iter().map(|&(i, j)| predictive(pset, i, j, params, features).entropy()).sum();
    total / T::of_usize(pairs.len())
}

/// Predictive for every `(i, j)` with `i < j`; `(j, i)` is its swap.
fn upper_predictives<T: Scalar>(
    pset: &ParticleSet<T>,
    params: &ExpertParams<T>,
    features: Option<&FeatureTable<T>>,
) -> Vec<(usize, usize, CategoricalDist3<T>)> {
    use rayon::prelude::*;
    let d = pset.d();
    let pairs: Vec<(usize, usize)> = ordered_pairs(d).filter(|(i, j)| i < j).collect();
    pairs.par_iter().map(|&(i, j)| (i, j, predictive(pset, i, j, params, features))).collect()
}

fn per_ordered_pair<T: Scalar>(
    pset: &ParticleSet<T>,
    truth: &BinaryGraph,
    params: &ExpertParams<T>,
    features: Option<&FeatureTable<T>>,
    f: impl Fn(&CategoricalDist3<T>, Label) -> T,
) -> T {
    let d = pset.d();
    if d < 2 {
        return T::nan();
    }
    let mut total = T::zero();
    for (i, j, p) in upper_predictives(pset, params, features) {
        let y = truth.label_unchecked(i, j);
        total += f(&p, y) + f(&p.swapped(), y.swapped());
    }
    total / T::of_usize(d * (d - 1))
}

/// Expected true-class probability averaged over ordered pairs.
pub fn etcp<T: Scalar>(
    pset: &ParticleSet<T>,
    truth: &BinaryGraph,
    params: &ExpertParams<T>,
    features: Option<&FeatureTable<T>>,
) -> T {
    per_ordered_pair(pset, truth, params, features, |p, y| p.prob(y))
}

/// Multiclass Brier score averaged over ordered pairs.
pub fn brier<T: Scalar>(
    pset: &ParticleSet<T>,
    truth: &BinaryGraph,
    params: &ExpertParams<T>,
    features: Option<&FeatureTable<T>>,
) -> T {
    per_ordered_pair(pset, truth, params, features, brier_term)
}

fn brier_term<T: Scalar>(p: &CategoricalDist3<T>, y: Label) -> T {
    Label::ALL
        .iter()
        .map(|&k| {
            let e = p.prob(k) - if k == y { T::one() } else { T::zero() };
            e * e
        })
        .sum()
}

/// Structural Hamming distance of one adjacency against the truth.
pub fn shd(adj: &[bool], truth: &BinaryGraph, mode: ShdMode) -> usize {
    let d = truth.d();
    match mode {
        ShdMode::Formula => ordered_pairs(d).filter(|&(i, j)| adj[i * d + j] != truth.has_edge(i, j)).count(),
        ShdMode::Flip1 => ordered_pairs(d)
            .filter(|(i, j)| i < j)
            .filter(|&(i, j)| (adj[i * d + j], adj[j * d + i]) != (truth.has_edge(i, j), truth.has_edge(j, i)))
            .count(),
    }
}

/// Posterior-weighted SHD.
pub fn shd_posterior<T: Scalar>(pset: &ParticleSet<T>, truth: &BinaryGraph, mode: ShdMode) -> T {
    pset.iter().map(|(g, w)| w * T::of_usize(shd(&g.adjacency(), truth, mode))).sum()
}

/// F1 of a predicted set against a target set.
///
/// Both empty scores 1; otherwise an empty side or zero overlap scores 0.
pub fn f1_counts(tp: usize, predicted: usize, target: usize) -> f64 {
    if predicted == 0 && target == 0 {
        return 1.0;
    }
    if predicted == 0 || target == 0 || tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / predicted as f64;
    let recall = tp as f64 / target as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Posterior-weighted skeleton F1.
pub fn skeleton_f1<T: Scalar>(pset: &ParticleSet<T>, truth: &BinaryGraph) -> T {
    let target = truth.skeleton();
    pset.iter()
        .map(|(g, w)| {
            let pred = g.skeleton();
            let tp = pred.intersection(&target).count();
            w * T::of(f1_counts(tp, pred.len(), target.len()))
        })
        .sum()
}

/// Posterior-weighted F1 over directed edges.
pub fn orientation_f1<T: Scalar>(pset: &ParticleSet<T>, truth: &BinaryGraph) -> T {
    let target = truth.edge_count();
    pset.iter()
        .map(|(g, w)| {
            let tp = g.edges().filter(|&(i, j, _)| truth.has_edge(i, j)).count();
            w * T::of(f1_counts(tp, g.edge_count(), target))
        })
        .sum()
}

/// Off-diagonal scores and truths in lexicographic pair order.
fn flatten<T: Scalar>(marginals: &[T], truth: &BinaryGraph) -> (Vec<f64>, Vec<bool>) {
    let d = truth.d();
    ordered_pairs(d).map(|(i, j)| (marginals[i * d + j].as_f64(), truth.has_edge(i, j))).unzip()
}

fn desc(a: f64, b: f64) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

/// Average precision with tied scores entering together.
/// NaN with a warning when there are no positives.
pub fn auprc_scores(scores: &[f64], truths: &[bool]) -> f64 {
    let positives = truths.iter().filter(|t| **t).count();
    if positives == 0 {
        log::warn!("AUPRC undefined without positive pairs");
        return f64::NAN;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| desc(scores[a], scores[b]));
    let (mut tp, mut fp, mut area, mut last_recall) = (0usize, 0usize, 0.0, 0.0);
    let mut k = 0;
    while k < idx.len() {
        let s = scores[idx[k]];
        while k < idx.len() && scores[idx[k]] == s {
            if truths[idx[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - last_recall) * precision;
        last_recall = recall;
    }
    area
}

/// Rank-sum AUROC with average ranks for ties. NaN with a warning when
/// either class is empty.
pub fn auroc_scores(scores: &[f64], truths: &[bool]) -> f64 {
    let pos = truths.iter().filter(|t| **t).count();
    let neg = truths.len() - pos;
    if pos == 0 || neg == 0 {
        log::warn!("AUROC undefined with {pos} positive and {neg} negative pairs");
        return f64::NAN;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| desc(scores[b], scores[a]));
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < idx.len() {
        let mut end = k;
        while end < idx.len() && scores[idx[end]] == scores[idx[k]] {
            end += 1;
        }
        // ranks k+1 ..= end share their mean
        let avg = (k + 1 + end) as f64 / 2.0;
        rank_sum += avg * idx[k..end].iter().filter(|&&m| truths[m]).count() as f64;
        k = end;
    }
    let pf = pos as f64;
    (rank_sum - pf * (pf + 1.0) / 2.0) / (pf * neg as f64)
}

/// Fraction of positives among the `k` best scores; ties keep input order.
pub fn topk_scores(scores: &[f64], truths: &[bool], k: usize) -> f64 {
    if k == 0 {
        return f64::NAN;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| desc(scores[a], scores[b]).then(a.cmp(&b)));
    idx.iter().take(k).filter(|&&m| truths[m]).count() as f64 / k as f64
}

/// Directed AUPRC of row-major `marginals` against `truth`.
pub fn directed_auprc<T: Scalar>(marginals: &[T], truth: &BinaryGraph) -> f64 {
    let (s, t) = flatten(marginals, truth);
    auprc_scores(&s, &t)
}

pub fn auroc<T: Scalar>(marginals: &[T], truth: &BinaryGraph) -> f64 {
    let (s, t) = flatten(marginals, truth);
    auroc_scores(&s, &t)
}

/// Top-`k` precision; `k` defaults to the number of true edges.
pub fn topk_precision<T: Scalar>(marginals: &[T], truth: &BinaryGraph, k: Option<usize>) -> f64 {
    let (s, t) = flatten(marginals, truth);
    topk_scores(&s, &t, k.unwrap_or_else(|| truth.edge_count()))
}

/// `P(i -> j | i and j adjacent)` from existence marginals, row-major.
/// Pairs that are never adjacent get 0.5.
pub fn orientation_marginals<T: Scalar>(marginals: &[T], d: usize) -> Vec<T> {
    let mut out = vec![T::zero(); d * d];
    for (i, j) in ordered_pairs(d) {
        let (a, b) = (marginals[i * d + j], marginals[j * d + i]);
        out[i * d + j] = if a + b > T::zero() { a / (a + b) } else { T::of(0.5) };
    }
    out
}

/// Which pairs the average entropy is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSet {
    /// The screened candidates of the round.
    #[default]
    Candidates,
    AllPairs,
}

/// One row of per-round metrics. Fields without a reference graph are NaN,
/// which JSON carries as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    #[serde(deserialize_with = "nan_from_null")]
    pub entropy: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub etcp: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub brier: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub shd: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub skel_f1: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub orient_f1: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub auprc: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub auroc: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub topk: f64,
}

fn nan_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl MetricsRow {
    pub const NAMES: [&'static str; 9] =
        ["entropy", "etcp", "brier", "shd", "skel_f1", "orient_f1", "auprc", "auroc", "topk"];

    pub fn values(&self) -> [f64; 9] {
        [
            self.entropy,
            self.etcp,
            self.brier,
            self.shd,
            self.skel_f1,
            self.orient_f1,
            self.auprc,
            self.auroc,
            self.topk,
        ]
    }
}

/// Every metric for one posterior snapshot.
pub fn evaluate<T: Scalar>(
    pset: &ParticleSet<T>,
    truth: Option<&BinaryGraph>,
    params: &ExpertParams<T>,
    features: Option<&FeatureTable<T>>,
    entropy_pairs: &[(usize, usize)],
    shd_mode: ShdMode,
) -> Result<MetricsRow> {
    let entropy = avg_predictive_entropy(pset, entropy_pairs, params, features).as_f64();
    let Some(truth) = truth else {
        let nan = f64::NAN;
        return Ok(MetricsRow {
            entropy,
            etcp: nan,
            brier: nan,
            shd: nan,
            skel_f1: nan,
            orient_f1: nan,
            auprc: nan,
            auroc: nan,
            topk: nan,
        });
    };
    if truth.d() != pset.d() {
        return Err(crate::error::contract(format!(
            "reference graph has {} nodes, posterior has {}",
            truth.d(),
            pset.d()
        )));
    }
    let m = pset.edge_marginals();
    let (s, t) = flatten(&m, truth);
    let both_classes = t.iter().any(|v| *v) && t.iter().any(|v| !*v);
    Ok(MetricsRow {
        entropy,
        etcp: etcp(pset, truth, params, features).as_f64(),
        brier: brier(pset, truth, params, features).as_f64(),
        shd: shd_posterior(pset, truth, shd_mode).as_f64(),
        skel_f1: skeleton_f1(pset, truth).as_f64(),
        orient_f1: orientation_f1(pset, truth).as_f64(),
        auprc: if both_classes { auprc_scores(&s, &t) } else { f64::NAN },
        auroc: if both_classes { auroc_scores(&s, &t) } else { f64::NAN },
        topk: topk_scores(&s, &t, truth.edge_count()),
    })
}
