//! Three-way expert likelihood `p(Y_ij | W)` built from direction scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::graph::{Label, WeightedDag};
use crate::scalar::Scalar;

/// Structural feature added to the direction score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub enum FeatureKind<T> {
    #[default]
    None,
    PosteriorLogOdds {
        #[serde(default = "default_eps_odds")]
        eps_odds: T,
    },
    VStructure,
    CycleRisk,
    /// `alphas` weights `[log-odds, v-structure, cycle-risk]`.
    LinearCombination {
        alphas: [T; 3],
        #[serde(default = "default_eps_odds")]
        eps_odds: T,
    },
}

fn default_eps_odds<T: Scalar>() -> T {
    T::of(1e-6)
}

/// Expert hyperparameters plus the numerical constants of the log link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct ExpertParams<T> {
    pub beta_edge: T,
    pub beta_dir: T,
    #[serde(default = "default_zero")]
    pub lambda: T,
    pub gamma: T,
    #[serde(default = "default_epsilon")]
    pub epsilon: T,
    #[serde(default = "default_floor")]
    pub prob_floor: T,
    #[serde(default)]
    pub feature: FeatureKind<T>,
}

fn default_zero<T: Scalar>() -> T {
    T::zero()
}

fn default_epsilon<T: Scalar>() -> T {
    T::of(1e-6)
}

fn default_floor<T: Scalar>() -> T {
    T::of(1e-9)
}

impl<T: Scalar> Default for ExpertParams<T> {
    fn default() -> Self {
        Self {
            beta_edge: T::of(10.0),
            beta_dir: T::of(10.0),
            lambda: T::zero(),
            gamma: T::of(0.1),
            epsilon: default_epsilon(),
            prob_floor: default_floor(),
            feature: FeatureKind::None,
        }
    }
}

impl<T: Scalar> ExpertParams<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("expert parameter {what}")));
        // zero sharpness is allowed: it is the uninformative-expert limit
        if !(self.beta_edge >= T::zero()) || !(self.beta_dir >= T::zero()) {
            return bad("beta_edge and beta_dir must be >= 0");
        }
        if !(self.gamma > T::zero()) || !(self.epsilon > T::zero()) {
            return bad("gamma and epsilon must be > 0");
        }
        if !(self.lambda >= T::zero()) {
            return bad("lambda must be >= 0");
        }
        if !(self.prob_floor >= T::zero() && self.prob_floor < T::one() / T::of(3.0)) {
            return bad("prob_floor must lie in [0, 1/3)");
        }
        Ok(())
    }

    /// Whether scores depend on posterior structural features.
    pub fn uses_features(&self) -> bool {
        self.lambda > T::zero() && self.feature != FeatureKind::None
    }

    /// Log-link evidence `log(eps + |w| / gamma)`.
    #[inline]
    pub fn magnitude_score(&self, w: T) -> T {
        (self.epsilon + w.abs() / self.gamma).ln()
    }

    /// Likelihood from the two weights of the pair and the feature value
    /// `phi_{i->j}`; every feature is antisymmetric so `phi_{j->i} = -phi`.
    #[inline]
    pub fn likelihood_parts(&self, w_ij: T, w_ji: T, phi_ij: T) -> CategoricalDist3<T> {
        let bonus = self.lambda * phi_ij;
        let s_ij = self.magnitude_score(w_ij) + bonus;
        let s_ji = self.magnitude_score(w_ji) - bonus;
        self.likelihood_from_scores(s_ij, s_ji)
    }

    #[inline]
    pub fn likelihood_from_scores(&self, s_ij: T, s_ji: T) -> CategoricalDist3<T> {
        let a = s_ij.max(s_ji);
        let d = s_ij - s_ji;
        let p_edge = (self.beta_edge * a).sigmoid();
        // 1 - sigma(x) evaluated as sigma(-x) keeps the tail exact
        let p_none = (-self.beta_edge * a).sigmoid();
        let p_fwd = (self.beta_dir * d).sigmoid();
        let p_rev = (-self.beta_dir * d).sigmoid();
        CategoricalDist3::from_raw([p_edge * p_rev, p_edge * p_fwd, p_none]).floored(self.prob_floor)
    }
}

/// A probability vector over labels `{0, 1, 2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoricalDist3<T> {
    pub p: [T; 3],
}

impl<T: Scalar> CategoricalDist3<T> {
    /// Checked constructor: entries in `[0, 1]` summing to one within `1e-12`.
    pub fn new(p: [T; 3]) -> Result<Self> {
        let sum = p[0] + p[1] + p[2];
        let ok = p.iter().all(|x| *x >= T::zero() && *x <= T::one())
            && (sum - T::one()).abs() <= T::of(1e-12).max(T::epsilon() * T::of(8.0));
        if ok {
            Ok(Self { p })
        } else {
            Err(Error::Contract(format!("not a distribution: {p:?}")))
        }
    }

    #[inline]
    pub(crate) fn from_raw(p: [T; 3]) -> Self {
        Self { p }
    }

    pub fn uniform() -> Self {
        let t = T::one() / T::of(3.0);
        Self { p: [t, t, t] }
    }

    #[inline]
    pub fn prob(&self, label: Label) -> T {
        self.p[label.index()]
    }

    /// Clamps entries below `floor` up to it and rescales the rest so the
    /// total stays one. Repeats until no rescaled entry dips under the floor.
    pub fn floored(self, floor: T) -> Self {
        if floor <= T::zero() || self.p.iter().all(|x| *x >= floor) {
            return self;
        }
        let mut p = self.p;
        let mut pinned = [false; 3];
        loop {
            let mut changed = false;
            for k in 0..3 {
                if !pinned[k] && p[k] < floor {
                    pinned[k] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            let n_pinned = pinned.iter().filter(|x| **x).count();
            let free_mass: T = (0..3).filter(|k| !pinned[*k]).map(|k| p[k]).sum();
            let target = T::one() - T::of_usize(n_pinned) * floor;
            for k in 0..3 {
                if pinned[k] {
                    p[k] = floor;
                } else if free_mass > T::zero() {
                    p[k] = p[k] * target / free_mass;
                }
            }
        }
        Self { p }
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> T {
        -(self.p[0].xlnx() + self.p[1].xlnx() + self.p[2].xlnx())
    }

    /// `KL(self || other)` in nats.
    pub fn kl(&self, other: &Self) -> T {
        let mut acc = T::zero();
        for k in 0..3 {
            let p = self.p[k];
            if p > T::zero() {
                acc += p * (p / other.p[k]).ln();
            }
        }
        acc
    }

    /// The distribution for the swapped pair: labels 0 and 1 exchange.
    pub fn swapped(&self) -> Self {
        Self { p: [self.p[1], self.p[0], self.p[2]] }
    }

    pub fn to_f64(&self) -> [f64; 3] {
        [self.p[0].as_f64(), self.p[1].as_f64(), self.p[2].as_f64()]
    }
}

fn feature_value<T: Scalar>(
    params: &ExpertParams<T>,
    features: Option<&FeatureTable<T>>,
    i: usize,
    j: usize,
) -> Result<T> {
    if !params.uses_features() {
        return Ok(T::zero());
    }
    match features {
        Some(t) => Ok(t.get(i, j)),
        None => Err(Error::Config(format!(
            "feature {:?} needs a posterior feature table",
            params.feature
        ))),
    }
}

fn check_pair<T: Scalar>(w: &WeightedDag<T>, i: usize, j: usize) -> Result<()> {
    if i == j || i >= w.d() || j >= w.d() {
        return Err(Error::Contract(format!("invalid query pair ({i}, {j})")));
    }
    Ok(())
}

/// Local direction score `s_{i->j}(W) = log(eps + |W_ij|/gamma) + lambda * phi_{i->j}`.
pub fn direction_score<T: Scalar>(
    w: &WeightedDag<T>,
    i: usize,
    j: usize,
    params: &ExpertParams<T>,
    features: Option<&FeatureTable<T>>,
) -> Result<T> {
    check_pair(w, i, j)?;
    let phi = feature_value(params, features, i, j)?;
    Ok(params.magnitude_score(w.weight(i, j)) + params.lambda * phi)
}

/// Edge evidence `a_ij = max(s_ij, s_ji)` and orientation evidence `d_ij = s_ij - s_ji`.
pub fn pair_stats<T: Scalar>(
    w: &WeightedDag<T>,
    i: usize,
    j: usize,
    params: &ExpertParams<T>,
    features: Option<&FeatureTable<T>>,
) -> Result<(T, T)> {
    let s_ij = direction_score(w, i, j, params, features)?;
    let s_ji = direction_score(w, j, i, params, features)?;
    Ok((s_ij.max(s_ji), s_ij - s_ji))
}

/// `p(Y_ij = . | W)` under the hierarchical logistic expert.
pub fn likelihood<T: Scalar>(
    w: &WeightedDag<T>,
    i: usize,
    j: usize,
    params: &ExpertParams<T>,
    features: Option<&FeatureTable<T>>,
) -> Result<CategoricalDist3<T>> {
    check_pair(w, i, j)?;
    let phi = feature_value(params, features, i, j)?;
    Ok(params.likelihood_parts(w.weight(i, j), w.weight(j, i), phi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(beta: f64) -> ExpertParams<f64> {
        ExpertParams { beta_edge: beta, beta_dir: beta, prob_floor: 0.0, ..Default::default() }
    }

    #[test]
    fn direction_score_examples() {
        let p = params(10.0);
        let g = WeightedDag::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let s = direction_score(&g, 0, 1, &p, None).unwrap();
        assert!((s - (10.0f64 + 1e-6).ln()).abs() < 1e-12);
        assert!((s - std::f64::consts::LN_10).abs() < 1e-6);
        let s0 = direction_score(&g, 1, 0, &p, None).unwrap();
        assert!((s0 - (-13.815511)).abs() < 1e-6);
    }

    #[test]
    fn pair_stats_examples() {
        let p = params(10.0);
        let g = WeightedDag::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let (a, d) = pair_stats(&g, 0, 1, &p, None).unwrap();
        assert!((a - std::f64::consts::LN_10).abs() < 1e-6);
        assert!((d - 16.118096).abs() < 1e-6);
        let (a2, d2) = pair_stats(&g, 1, 0, &p, None).unwrap();
        assert_eq!(a, a2);
        assert_eq!(d, -d2);

        let empty = WeightedDag::<f64>::empty(2);
        let (a, d) = pair_stats(&empty, 0, 1, &p, None).unwrap();
        assert_eq!(d, 0.0);
        assert!((a - 1e-6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn likelihood_examples() {
        let p = params(10.0);
        let g = WeightedDag::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let l = likelihood(&g, 0, 1, &p, None).unwrap();
        assert!(l.p[1] >= 1.0 - 1e-9, "{l:?}");

        let empty = WeightedDag::<f64>::empty(2);
        let l = likelihood(&empty, 0, 1, &p, None).unwrap();
        assert!(l.p[2] >= 1.0 - 1e-9);
        // p_edge = sigma(10 log 1e-6) ~ 1e-60
        assert!(l.p[0] + l.p[1] < 1e-59);

        let flat = params(0.0);
        for g in [&g, &empty] {
            let l = likelihood(g, 0, 1, &flat, None).unwrap();
            assert_eq!(l.p, [0.25, 0.25, 0.5]);
        }
    }

    #[test]
    fn floor_pins_small_classes() {
        let d = CategoricalDist3::from_raw([1e-30, 1.0 - 1e-30, 0.0]).floored(1e-3);
        assert_eq!(d.p[0], 1e-3);
        assert_eq!(d.p[2], 1e-3);
        assert!((d.p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let same = CategoricalDist3::from_raw([0.2, 0.3, 0.5]);
        assert_eq!(same.floored(0.0), same);
        assert_eq!(same.floored(1e-9), same);
    }

    #[test]
    fn missing_feature_table_is_a_config_error() {
        let p = ExpertParams { lambda: 1.0, feature: FeatureKind::CycleRisk, ..params(1.0) };
        let g = WeightedDag::<f64>::empty(3);
        assert!(matches!(likelihood(&g, 0, 1, &p, None), Err(Error::Config(_))));
        // lambda = 0 never consults the table
        let p0 = ExpertParams { lambda: 0.0, ..p };
        assert!(likelihood(&g, 0, 1, &p0, None).is_ok());
    }

    #[test]
    fn params_validation() {
        assert!(ExpertParams::<f64>::default().validate().is_ok());
        assert!(ExpertParams { gamma: 0.0, ..ExpertParams::<f64>::default() }.validate().is_err());
        assert!(ExpertParams { prob_floor: 0.4, ..ExpertParams::<f64>::default() }.validate().is_err());
        assert!(ExpertParams { beta_edge: -1.0, ..ExpertParams::<f64>::default() }.validate().is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(CategoricalDist3::new([1.0, 0.0, 0.0]).unwrap().entropy(), 0.0);
        let u = CategoricalDist3::<f64>::uniform().entropy();
        assert!((u - 3f64.ln()).abs() < 1e-12);
        let h = CategoricalDist3::<f64>::new([0.5, 0.5, 0.0]).unwrap().entropy();
        assert!((h - std::f64::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn works_in_single_precision() {
        let p = ExpertParams::<f32>::default();
        let g = WeightedDag::from_edges(2, &[(0, 1, 1.0f32)]).unwrap();
        let l = likelihood(&g, 0, 1, &p, None).unwrap();
        assert!((l.p.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert!(l.p[1] > 0.99);
    }
}
