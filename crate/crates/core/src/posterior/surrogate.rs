use serde::{Deserialize, Serialize};

use crate::graph::{GraphEdit, WeightedDag};
use crate::posterior::rejuvenate::pair_after_edit;
use crate::posterior::ParticleSet;
use crate::scalar::Scalar;

/// Additive smoothing `a` in `m_ij = (c_ij + a) / (1 + 2a)`.
pub const SURROGATE_SMOOTHING: f64 = 0.01;

/// Closed-form stand-in for the initial posterior density, fitted to the
/// round-zero particles: independent Bernoulli edges with smoothed
/// marginals, and one global Normal over nonzero edge weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogatePrior<T> {
    d: usize,
    log_present: Vec<T>,
    log_absent: Vec<T>,
    mu: T,
    sigma: T,
}

impl<T: Scalar> SurrogatePrior<T> {
    pub fn fit(initial: &ParticleSet<T>) -> Self {
        let d = initial.d();
        let a = T::of(SURROGATE_SMOOTHING);
        let marginals = initial.edge_marginals();
        let mut log_present = vec![T::zero(); d * d];
        let mut log_absent = vec![T::zero(); d * d];
        for i in 0..d {
            for j in 0..d {
                if i == j {
                    continue;
                }
                let k = i * d + j;
                let m = (marginals[k] + a) / (T::one() + a + a);
                log_present[k] = m.ln();
                log_absent[k] = (T::one() - m).ln();
            }
        }

        // weighted moments of all nonzero weights
        let (mut mass, mut sum, mut sum_sq) = (T::zero(), T::zero(), T::zero());
        for (g, w) in initial.iter() {
            for (_, _, x) in g.edges() {
                mass += w;
                sum += w * x;
                sum_sq += w * x * x;
            }
        }
        let (mu, sigma) = if mass > T::zero() {
            let mu = sum / mass;
            let var = (sum_sq / mass - mu * mu).max(T::zero());
            let sigma = var.sqrt();
            // a degenerate spread (one distinct weight) falls back to unit scale
            (mu, if sigma > T::of(1e-12) { sigma } else { T::one() })
        } else {
            (T::zero(), T::one())
        };
        Self { d, log_present, log_absent, mu, sigma }
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    fn weight_log_density(&self, x: T) -> T {
        let z = (x - self.mu) / self.sigma;
        -T::of(0.5) * z * z - self.sigma.ln() - T::of(0.5) * (T::TAU()).ln()
    }

    #[inline]
    fn entry(&self, k: usize, x: T) -> T {
        if x != T::zero() {
            self.log_present[k] + self.weight_log_density(x)
        } else {
            self.log_absent[k]
        }
    }

    /// `log q0(W)` under the surrogate.
    pub fn log_density(&self, w: &WeightedDag<T>) -> T {
        assert_eq!(w.d(), self.d, "surrogate fitted for a different node count");
        let d = self.d;
        let mut acc = T::zero();
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    let k = i * d + j;
                    acc += self.entry(k, w.weights()[k]);
                }
            }
        }
        acc
    }

    /// `log q0(W') - log q0(W)` for a local edit, touching only `(i,j)` and `(j,i)`.
    pub fn edit_delta(&self, w: &WeightedDag<T>, edit: &GraphEdit<T>) -> T {
        let (i, j, d) = (edit.i, edit.j, self.d);
        let (new_ij, new_ji) = pair_after_edit(w, edit);
        let (kij, kji) = (i * d + j, j * d + i);
        self.entry(kij, new_ij) + self.entry(kji, new_ji)
            - self.entry(kij, w.weight(i, j))
            - self.entry(kji, w.weight(j, i))
    }
}

/// Prior density used inside the rejuvenation acceptance ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorDensity<T> {
    /// Constant density; only the replayed likelihood matters.
    Uniform,
    Surrogate(SurrogatePrior<T>),
}

impl<T: Scalar> PriorDensity<T> {
    pub fn log_density(&self, w: &WeightedDag<T>) -> T {
        match self {
            PriorDensity::Uniform => T::zero(),
            PriorDensity::Surrogate(s) => s.log_density(w),
        }
    }

    pub fn edit_delta(&self, w: &WeightedDag<T>, edit: &GraphEdit<T>) -> T {
        match self {
            PriorDensity::Uniform => T::zero(),
            PriorDensity::Surrogate(s) => s.edit_delta(w, edit),
        }
    }
}

/// `log q0` of `w` under a surrogate fitted to `initial`.
pub fn surrogate_log_prior<T: Scalar>(initial: &ParticleSet<T>, w: &WeightedDag<T>) -> T {
    SurrogatePrior::fit(initial).log_density(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_initial_set_closed_form() {
        let d = 4;
        let init = ParticleSet::uniform(vec![WeightedDag::<f64>::empty(d)]).unwrap();
        let lp = surrogate_log_prior(&init, &WeightedDag::empty(d));
        let a = SURROGATE_SMOOTHING;
        let expect = (d * (d - 1)) as f64 * (1.0 - a / (1.0 + 2.0 * a)).ln();
        assert!((lp - expect).abs() < 1e-12);
    }

    #[test]
    fn members_of_initial_set_score_finitely() {
        let g = WeightedDag::from_edges(3, &[(0, 1, 0.8f64), (1, 2, 1.2)]).unwrap();
        let init = ParticleSet::uniform(vec![g.clone(); 5]).unwrap();
        let s = SurrogatePrior::fit(&init);
        assert!(s.log_density(&g).is_finite());
        assert!(s.log_density(&WeightedDag::empty(3)).is_finite());
    }

    #[test]
    fn half_marginal_edge_structure_term_cancels() {
        // c = 0.5 gives m = 0.5 so present and absent structure terms agree
        let with = WeightedDag::from_edges(2, &[(0, 1, 1.0f64)]).unwrap();
        let init = ParticleSet::uniform(vec![with.clone(), WeightedDag::empty(2)]).unwrap();
        let s = SurrogatePrior::fit(&init);
        let k = 1;
        assert!((s.log_present[k] - s.log_absent[k]).abs() < 1e-15);
    }

    #[test]
    fn edit_delta_matches_full_difference() {
        let a = WeightedDag::from_edges(3, &[(0, 1, 0.8f64), (1, 2, 1.2)]).unwrap();
        let b = WeightedDag::from_edges(3, &[(0, 2, 0.6)]).unwrap();
        let init = ParticleSet::uniform(vec![a.clone(), b]).unwrap();
        let s = SurrogatePrior::fit(&init);
        for e in [
            GraphEdit::add(0, 2, 0.9),
            GraphEdit::remove(0, 1),
            GraphEdit::flip(1, 2),
            GraphEdit::perturb(0, 1, 1.7),
        ] {
            let after = a.apply_edit(&e).unwrap();
            let full = s.log_density(&after) - s.log_density(&a);
            assert!((full - s.edit_delta(&a, &e)).abs() < 1e-12, "{e:?}");
        }
    }
}
