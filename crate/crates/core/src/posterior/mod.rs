//! Weighted particle approximation of the posterior over DAGs.
//!
//! Each expert answer multiplies particle weights by the answer's likelihood.
//! When the effective sample size drops the set is resampled and rejuvenated
//! with Metropolis-Hastings graph edits targeting the replayed posterior.

mod rejuvenate;
mod surrogate;

pub use rejuvenate::{rejuvenate, AddWeightLaw, RejuvenationKernel, RejuvenationStats};
pub use surrogate::{surrogate_log_prior, PriorDensity, SurrogatePrior, SURROGATE_SMOOTHING};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::expert::ExpertParams;
use crate::features::FeatureTable;
use crate::graph::{Label, WeightedDag};
use crate::scalar::Scalar;

/// `S` weighted DAGs approximating the current posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet<T> {
    particles: Vec<WeightedDag<T>>,
    weights: Vec<T>,
    log_prior: Option<Vec<T>>,
}

impl<T: Scalar> ParticleSet<T> {
    pub fn new(particles: Vec<WeightedDag<T>>, weights: Vec<T>) -> Result<Self> {
        if particles.is_empty() {
            return Err(contract("a particle set needs at least one particle"));
        }
        if particles.len() != weights.len() {
            return Err(contract(format!("{} particles but {} weights", particles.len(), weights.len())));
        }
        let d = particles[0].d();
        if particles.iter().any(|p| p.d() != d) {
            return Err(contract("particles disagree on node count"));
        }
        if weights.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
            return Err(contract("particle weights must be finite and nonnegative"));
        }
        let total: T = weights.iter().copied().sum();
        if (total - T::one()).abs() > T::of(1e-10).max(T::epsilon() * T::of_usize(weights.len())) {
            return Err(contract(format!("particle weights sum to {total}, not 1")));
        }
        Ok(Self { particles, weights, log_prior: None })
    }

    /// Equal weights `1/S`.
    pub fn uniform(particles: Vec<WeightedDag<T>>) -> Result<Self> {
        let s = particles.len().max(1);
        let w = T::one() / T::of_usize(s);
        Self::new(particles, vec![w; s])
    }

    pub fn with_log_prior(mut self, log_prior: Vec<T>) -> Result<Self> {
        if log_prior.len() != self.len() {
            return Err(contract("one log-prior entry per particle"));
        }
        self.log_prior = Some(log_prior);
        Ok(self)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.particles[0].d()
    }

    pub fn particles(&self) -> &[WeightedDag<T>] {
        &self.particles
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn log_prior(&self) -> Option<&[T]> {
        self.log_prior.as_deref()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&WeightedDag<T>, T)> {
        self.particles.iter().zip(self.weights.iter().copied())
    }

    pub fn ess(&self) -> T {
        ess(&self.weights)
    }

    /// `p_ij = sum_s w_s 1[W_ij != 0]`, row-major with a zero diagonal.
    pub fn edge_marginals(&self) -> Vec<T> {
        let d = self.d();
        let mut out = vec![T::zero(); d * d];
        for (g, w) in self.iter() {
            if w == T::zero() {
                continue;
            }
            for (k, x) in g.weights().iter().enumerate() {
                if *x != T::zero() {
                    out[k] += w;
                }
            }
        }
        out
    }

    /// Multiplies each weight by `p(label | W_s)` and renormalises.
    ///
    /// `frozen_feature` is the structural feature value of `(i, j)` at query
    /// time; it is ignored unless the expert uses features.
    pub fn reweight(
        &mut self,
        i: usize,
        j: usize,
        label: Label,
        params: &ExpertParams<T>,
        frozen_feature: Option<T>,
    ) -> Result<()> {
        let d = self.d();
        if i == j || i >= d || j >= d {
            return Err(contract(format!("invalid query pair ({i}, {j})")));
        }
        let phi = frozen_feature.unwrap_or_else(T::zero);
        let factors: Vec<T> = self
            .particles
            .par_iter()
            .map(|g| params.likelihood_parts(g.weight(i, j), g.weight(j, i), phi).prob(label))
            .collect();
        self.apply_factors(&factors)
    }

    /// Multiplies weights by arbitrary nonnegative factors and renormalises.
    pub fn apply_factors(&mut self, factors: &[T]) -> Result<()> {
        assert_eq!(factors.len(), self.len());
        let updated: Vec<T> = self.weights.iter().zip(factors).map(|(w, f)| *w * *f).collect();
        let total: T = updated.iter().copied().sum();
        if !(total > T::zero()) || !total.is_finite() {
            return Err(Error::DegeneratePosterior);
        }
        self.weights = updated.into_iter().map(|w| w / total).collect();
        Ok(())
    }

    /// Multinomial resampling; all new weights are exactly `1/S`.
    pub fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let s = self.len();
        let as_f64: Vec<f64> = self.weights.iter().map(|w| w.as_f64()).collect();
        let index = WeightedIndex::new(&as_f64).expect("normalised weights have positive mass");
        let picks: Vec<usize> = (0..s).map(|_| index.sample(rng)).collect();
        self.particles = picks.iter().map(|&k| self.particles[k].clone()).collect();
        if let Some(lp) = &self.log_prior {
            self.log_prior = Some(picks.iter().map(|&k| lp[k]).collect());
        }
        self.weights = vec![T::one() / T::of_usize(s); s];
    }

    pub(crate) fn particles_mut(&mut self) -> &mut [WeightedDag<T>] {
        &mut self.particles
    }

    pub(crate) fn log_prior_mut(&mut self) -> Option<&mut [T]> {
        self.log_prior.as_deref_mut()
    }

    pub fn into_parts(self) -> (Vec<WeightedDag<T>>, Vec<T>) {
        (self.particles, self.weights)
    }
}

/// Effective sample size `1 / sum w^2` of normalised weights.
pub fn ess<T: Scalar>(weights: &[T]) -> T {
    let sq: T = weights.iter().map(|w| *w * *w).sum();
    T::one() / sq
}

/// Functional form of [`ParticleSet::reweight`].
pub fn reweight<T: Scalar>(
    pset: &ParticleSet<T>,
    i: usize,
    j: usize,
    label: Label,
    params: &ExpertParams<T>,
    features: Option<&FeatureTable<T>>,
) -> Result<ParticleSet<T>> {
    let phi = if params.uses_features() {
        let t = features.ok_or_else(|| Error::Config("feature table required".into()))?;
        Some(t.get(i, j))
    } else {
        None
    };
    let mut out = pset.clone();
    out.reweight(i, j, label, params, phi)?;
    Ok(out)
}

/// Functional form of [`ParticleSet::resample`].
pub fn resample<T: Scalar, R: Rng + ?Sized>(pset: &ParticleSet<T>, rng: &mut R) -> ParticleSet<T> {
    let mut out = pset.clone();
    out.resample(rng);
    out
}

/// Functional form of [`ParticleSet::edge_marginals`].
pub fn edge_marginals<T: Scalar>(pset: &ParticleSet<T>) -> Vec<T> {
    pset.edge_marginals()
}

/// One revealed expert answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub round: usize,
    pub i: usize,
    pub j: usize,
    pub label: Label,
    pub policy: String,
    pub eig_value: Option<f64>,
    /// Structural feature `phi_{i->j}` frozen when the query was asked.
    pub frozen_feature: Option<f64>,
}

/// All revealed answers in round order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct History {
    records: Vec<QueryRecord>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: QueryRecord) -> Result<()> {
        if record.round != self.records.len() + 1 {
            return Err(contract(format!(
                "history expects round {}, got {}",
                self.records.len() + 1,
                record.round
            )));
        }
        if record.i == record.j {
            return Err(contract("history record with i == j"));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[QueryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Whether `(i, j)` (or, if `unordered`, either orientation) was asked.
    pub fn contains_pair(&self, i: usize, j: usize, unordered: bool) -> bool {
        self.records
            .iter()
            .any(|r| (r.i == i && r.j == j) || (unordered && r.i == j && r.j == i))
    }
}
