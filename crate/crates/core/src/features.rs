//! Posterior structural features that can tilt the expert's direction scores.
//!
//! All three are functionals of the current particle posterior rather than
//! of a single graph, and all are antisymmetric in `(i, j)`.

use rayon::prelude::*;

use crate::expert::FeatureKind;
use crate::graph::WeightedDag;
use crate::posterior::ParticleSet;
use crate::scalar::Scalar;

/// `log((p_{i->j} + eps) / (p_{j->i} + eps))` from particle edge probabilities.
pub fn feature_posterior_log_odds<T: Scalar>(pset: &ParticleSet<T>, i: usize, j: usize, eps_odds: T) -> T {
    let (mut fwd, mut rev) = (T::zero(), T::zero());
    for (g, w) in pset.iter() {
        if g.has_edge(i, j) && !g.has_edge(j, i) {
            fwd += w;
        } else if g.has_edge(j, i) && !g.has_edge(i, j) {
            rev += w;
        }
    }
    ((fwd + eps_odds) / (rev + eps_odds)).ln()
}

#[inline]
fn adjacent<T: Scalar>(g: &WeightedDag<T>, a: usize, b: usize) -> bool {
    g.has_edge(a, b) || g.has_edge(b, a)
}

/// Count of `k` making `i -> j <- k` an unshielded collider in `g`.
fn collider_count<T: Scalar>(g: &WeightedDag<T>, i: usize, j: usize) -> usize {
    if !g.has_edge(i, j) {
        return 0;
    }
    (0..g.d())
        .filter(|&k| k != i && k != j && g.has_edge(k, j) && !adjacent(g, i, k))
        .count()
}

/// Mean collider support for `i -> j` minus that for `j -> i`.
pub fn feature_v_structure<T: Scalar>(pset: &ParticleSet<T>, i: usize, j: usize) -> T {
    let d = pset.d();
    if d < 3 {
        return T::zero();
    }
    let mut acc = T::zero();
    for (g, w) in pset.iter() {
        let diff = collider_count(g, i, j) as i64 - collider_count(g, j, i) as i64;
        acc += w * T::of(diff as f64);
    }
    acc / T::of_usize(d - 2)
}

/// `Pr(adding j->i closes a cycle) - Pr(adding i->j closes a cycle)`.
pub fn feature_cycle_risk<T: Scalar>(pset: &ParticleSet<T>, i: usize, j: usize) -> T {
    let mut acc = T::zero();
    for (g, w) in pset.iter() {
        if g.adding_creates_cycle(j, i) {
            acc += w;
        }
        if g.adding_creates_cycle(i, j) {
            acc -= w;
        }
    }
    acc
}

/// Feature values `phi_{i->j}` for every ordered pair, evaluated once per
/// round and shared by all particles.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable<T> {
    d: usize,
    values: Vec<T>,
}

/// Row-major reachability closure of one graph.
fn reachability<T: Scalar>(g: &WeightedDag<T>) -> Vec<bool> {
    let d = g.d();
    let mut out = vec![false; d * d];
    for s in 0..d {
        let mut stack = vec![s];
        out[s * d + s] = true;
        while let Some(v) = stack.pop() {
            for w in 0..d {
                if g.has_edge(v, w) && !out[s * d + w] {
                    out[s * d + w] = true;
                    stack.push(w);
                }
            }
        }
    }
    out
}

impl<T: Scalar> FeatureTable<T> {
    /// Evaluates `kind` on `pset`; `None` when the kind is `None`.
    pub fn compute(pset: &ParticleSet<T>, kind: &FeatureKind<T>) -> Option<Self> {
        let d = pset.d();
        let pairs: Vec<(usize, usize)> = crate::graph::ordered_pairs(d).collect();
        let (odds_eps, alphas) = match kind {
            FeatureKind::None => return None,
            FeatureKind::PosteriorLogOdds { eps_odds } => (*eps_odds, [T::one(), T::zero(), T::zero()]),
            FeatureKind::VStructure => (T::zero(), [T::zero(), T::one(), T::zero()]),
            FeatureKind::CycleRisk => (T::zero(), [T::zero(), T::zero(), T::one()]),
            FeatureKind::LinearCombination { alphas, eps_odds } => (*eps_odds, *alphas),
        };
        let mut values = vec![T::zero(); d * d];
        if alphas[0] != T::zero() {
            for &(i, j) in &pairs {
                values[i * d + j] += alphas[0] * feature_posterior_log_odds(pset, i, j, odds_eps);
            }
        }
        if alphas[1] != T::zero() {
            for &(i, j) in &pairs {
                values[i * d + j] += alphas[1] * feature_v_structure(pset, i, j);
            }
        }
        if alphas[2] != T::zero() {
            // one closure per particle instead of a search per pair
            let risk: Vec<T> = pset
                .particles()
                .par_iter()
                .zip(pset.weights().par_iter())
                .map(|(g, w)| {
                    let r = reachability(g);
                    let mut out = vec![T::zero(); d * d];
                    for &(i, j) in &pairs {
                        // adding j->i cycles iff i reaches j and j->i is absent
                        let back = !g.has_edge(j, i) && r[i * d + j];
                        let fwd = !g.has_edge(i, j) && r[j * d + i];
                        out[i * d + j] = *w * (T::of(back as u8 as f64) - T::of(fwd as u8 as f64));
                    }
                    out
                })
                .reduce(
                    || vec![T::zero(); d * d],
                    |mut a, b| {
                        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                        a
                    },
                );
            for k in 0..d * d {
                values[k] += alphas[2] * risk[k];
            }
        }
        Some(Self { d, values })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.d + j]
    }
}
