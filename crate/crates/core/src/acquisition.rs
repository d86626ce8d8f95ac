//! Posterior predictive over expert answers, information gain and query policies.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expert::{CategoricalDist3, ExpertParams};
use crate::features::FeatureTable;
use crate::graph::ordered_pairs;
use crate::posterior::{History, ParticleSet};
use crate::scalar::Scalar;

/// Query-selection policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Policy {
    /// Maximise expected information gain over the screened candidates.
    #[serde(rename = "eig", alias = "EIG")]
    Eig,
    /// Most uncertain screened candidate.
    #[serde(rename = "unc", alias = "UNC")]
    Uncertainty,
    /// Uniform over the screened candidates.
    #[serde(rename = "rnd", alias = "RND")]
    Random,
    /// Round-zero information-gain ranking, never updated.
    #[serde(rename = "ste", alias = "STE")]
    Static,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Eig => "eig",
            Policy::Uncertainty => "unc",
            Policy::Random => "rnd",
            Policy::Static => "ste",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eig" => Ok(Policy::Eig),
            "unc" | "uncertainty" => Ok(Policy::Uncertainty),
            "rnd" | "random" => Ok(Policy::Random),
            "ste" | "static" => Ok(Policy::Static),
            other => Err(Error::Config(format!("unknown policy {other:?}"))),
        }
    }
}

#[inline]
fn phi_for<T: Scalar>(params: &ExpertParams<T>, features: Option<&FeatureTable<T>>, i: usize, j: usize) -> T {
    match features {
        Some(t) if params.uses_features() => t.get(i, j),
        _ => T::zero(),
    }
}

/// Per-particle likelihoods for `(i, j)`.
pub fn pair_likelihoods<T: Scalar>(
    pset: &ParticleSet<T>,
    i: usize,
    j: usize,
    params: &ExpertParams<T>,
    features: Option<&FeatureTable<T>>,
) -> Vec<CategoricalDist3<T>> {
    let phi = phi_for(params, features, i, j);
    pset.particles()
        .iter()
        .map(|g| params.likelihood_parts(g.weight(i, j), g.weight(j, i), phi))
        .collect()
}

/// `p(y) = sum_s w_s p(Y_ij = y | W_s)`.
pub fn predictive<T: Scalar>(
    pset: &ParticleSet<T>,
    i: usize,
    j: usize,
    params: &ExpertParams<T>,
    features: Option<&FeatureTable<T>>,
) -> CategoricalDist3<T> {
    let phi = phi_for(params, features, i, j);
    let mut p = [T::zero(); 3];
    for (g, w) in pset.iter() {
        let l = params.likelihood_parts(g.weight(i, j), g.weight(j, i), phi);
        for k in 0..3 {
            p[k] += w * l.p[k];
        }
    }
    CategoricalDist3 { p }
}

/// Shannon entropy in nats.
pub fn entropy3<T: Scalar>(dist: &CategoricalDist3<T>) -> T {
    dist.entropy()
}

/// Predictive plus information gain for one pair in a single particle pass.
pub fn predictive_and_eig<T: Scalar>(
    pset: &ParticleSet<T>,
    i: usize,
    j: usize,
    params: &ExpertParams<T>,
    features: Option<&FeatureTable<T>>,
) -> (CategoricalDist3<T>, T) {
    let phi = phi_for(params, features, i, j);
    let mut p = [T::zero(); 3];
    let mut conditional = T::zero();
    for (g, w) in pset.iter() {
        let l = params.likelihood_parts(g.weight(i, j), g.weight(j, i), phi);
        for k in 0..3 {
            p[k] += w * l.p[k];
        }
        conditional += w * l.entropy();
    }
    let pred = CategoricalDist3 { p };
    let mut gain = pred.entropy() - conditional;
    if gain < T::zero() && gain >= -T::of(1e-12) {
        gain = T::zero();
    }
    (pred, gain)
}

/// Mutual information between the graph and `Y_ij`: predictive entropy
/// minus the posterior-averaged likelihood entropy.
pub fn eig<T: Scalar>(
    pset: &ParticleSet<T>,
    i: usize,
    j: usize,
    params: &ExpertParams<T>,
    features: Option<&FeatureTable<T>>,
) -> T {
    predictive_and_eig(pset, i, j, params, features).1
}

/// Information gain as the expected KL divergence from the current particle
/// posterior to the posterior after each hypothetical answer.
pub fn eig_via_expected_kl<T: Scalar>(
    pset: &ParticleSet<T>,
    i: usize,
    j: usize,
    params: &ExpertParams<T>,
    features: Option<&FeatureTable<T>>,
) -> T {
    let liks = pair_likelihoods(pset, i, j, params, features);
    let w = pset.weights();
    let mut total = T::zero();
    for y in 0..3 {
        let evidence: T = w.iter().zip(&liks).map(|(w, l)| *w * l.p[y]).sum();
        if evidence <= T::zero() {
            continue;
        }
        let mut kl = T::zero();
        for (ws, l) in w.iter().zip(&liks) {
            let post = *ws * l.p[y] / evidence;
            if post > T::zero() {
                kl += post * (post / *ws).ln();
            }
        }
        total += evidence * kl;
    }
    total
}

/// Information gain as the posterior-weighted KL from each particle's
/// likelihood to the predictive.
pub fn eig_mixture_kl<T: Scalar>(
    pset: &ParticleSet<T>,
    i: usize,
    j: usize,
    params: &ExpertParams<T>,
    features: Option<&FeatureTable<T>>,
) -> T {
    let liks = pair_likelihoods(pset, i, j, params, features);
    let pred = predictive(pset, i, j, params, features);
    pset.weights().iter().zip(&liks).map(|(w, l)| *w * l.kl(&pred)).sum()
}

/// Screened candidate pairs, most uncertain first.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet<T> {
    pub pairs: Vec<(usize, usize)>,
    pub scores: Vec<T>,
}

impl<T: Scalar> CandidateSet<T> {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn score_of(&self, i: usize, j: usize) -> Option<T> {
        self.pairs.iter().position(|p| *p == (i, j)).map(|k| self.scores[k])
    }
}

/// Screening switches beyond `k`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScreenOptions<'a> {
    /// Score unordered pairs by existence in either direction.
    pub unordered: bool,
    /// Drop pairs already present in this history.
    pub exclude: Option<&'a History>,
}

fn by_score_then_pair<T: Scalar>(a: &((usize, usize), T), b: &((usize, usize), T)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
}

/// Top-`k` pairs by Bernoulli variance `u_ij = p_ij (1 - p_ij)` of the edge
/// marginal, ties broken lexicographically.
pub fn screen_marginals<T: Scalar>(marginals: &[T], d: usize, k: usize, opts: ScreenOptions<'_>) -> CandidateSet<T> {
    let mut scored: Vec<((usize, usize), T)> = ordered_pairs(d)
        .filter(|&(i, j)| !opts.unordered || i < j)
        .filter(|&(i, j)| opts.exclude.is_none_or(|h| !h.contains_pair(i, j, opts.unordered)))
        .map(|(i, j)| {
            let p = if opts.unordered {
                (marginals[i * d + j] + marginals[j * d + i]).min(T::one())
            } else {
                marginals[i * d + j]
            };
            ((i, j), p * (T::one() - p))
        })
        .collect();
    scored.sort_by(by_score_then_pair);
    scored.truncate(k);
    let (pairs, scores) = scored.into_iter().unzip();
    CandidateSet { pairs, scores }
}

/// Ordered-pair screening over the particle marginals.
pub fn screen<T: Scalar>(pset: &ParticleSet<T>, k: usize) -> CandidateSet<T> {
    screen_marginals(&pset.edge_marginals(), pset.d(), k, ScreenOptions::default())
}

/// A chosen query and, for the information-gain policies, its gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection<T> {
    pub i: usize,
    pub j: usize,
    pub eig: Option<T>,
}

/// Round-zero information gain of every ordered pair, best first.
pub fn static_ranking<T: Scalar>(
    pset: &ParticleSet<T>,
    params: &ExpertParams<T>,
    features: Option<&FeatureTable<T>>,
) -> Vec<((usize, usize), T)> {
    let pairs: Vec<_> = ordered_pairs(pset.d()).collect();
    let mut ranked: Vec<_> = pairs
        .par_iter()
        .map(|&(i, j)| ((i, j), eig(pset, i, j, params, features)))
        .collect();
    ranked.sort_by(by_score_then_pair);
    ranked
}

/// Picks the next pair to ask about.
///
/// `static_ranking` and `history` are consulted only by [`Policy::Static`],
/// which walks the ranking and returns the first pair not yet asked.
#[allow(clippy::too_many_arguments)]
pub fn select_query<T: Scalar, R: Rng + ?Sized>(
    candidates: &CandidateSet<T>,
    policy: Policy,
    pset: &ParticleSet<T>,
    params: &ExpertParams<T>,
    features: Option<&FeatureTable<T>>,
    rng: &mut R,
    static_ranking: Option<&[((usize, usize), T)]>,
    history: Option<&History>,
) -> Result<Selection<T>> {
    match policy {
        Policy::Static => {
            let ranking =
                static_ranking.ok_or_else(|| Error::Config("static policy needs a round-zero ranking".into()))?;
            ranking
                .iter()
                .find(|((i, j), _)| history.is_none_or(|h| !h.contains_pair(*i, *j, false)))
                .map(|&((i, j), g)| Selection { i, j, eig: Some(g) })
                .ok_or(Error::Exhausted)
        }
        _ if candidates.is_empty() => Err(Error::Exhausted),
        Policy::Uncertainty => {
            let (i, j) = candidates.pairs[0];
            Ok(Selection { i, j, eig: None })
        }
        Policy::Random => {
            let (i, j) = candidates.pairs[rng.random_range(0..candidates.len())];
            Ok(Selection { i, j, eig: None })
        }
        Policy::Eig => {
            let gains: Vec<T> = candidates
                .pairs
                .par_iter()
                .map(|&(i, j)| eig(pset, i, j, params, features))
                .collect();
            let mut best = 0;
            for k in 1..gains.len() {
                let better = gains[k] > gains[best]
                    || (gains[k] == gains[best] && candidates.pairs[k] < candidates.pairs[best]);
                if better {
                    best = k;
                }
            }
            let (i, j) = candidates.pairs[best];
            Ok(Selection { i, j, eig: Some(gains[best]) })
        }
    }
}
