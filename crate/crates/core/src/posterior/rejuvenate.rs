use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::expert::ExpertParams;
use crate::graph::{EditKind, GraphEdit, Label, WeightedDag};
use crate::posterior::{History, ParticleSet, PriorDensity};
use crate::scalar::Scalar;

/// Law of the weight installed by an `AddEdge` proposal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum AddWeightLaw<T> {
    Uniform { low: T, high: T },
    Fixed { value: T },
}

impl<T: Scalar> AddWeightLaw<T> {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match *self {
            AddWeightLaw::Uniform { low, high } => {
                let u: f64 = rng.random();
                low + (high - low) * T::of(u)
            }
            AddWeightLaw::Fixed { value } => value,
        }
    }

    fn log_density(&self, x: T) -> T {
        match *self {
            AddWeightLaw::Uniform { low, high } if x >= low && x <= high => -(high - low).ln(),
            AddWeightLaw::Fixed { value } if x == value => T::zero(),
            _ => T::neg_infinity(),
        }
    }
}

/// Graph-edit proposal used by the rejuvenation sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct RejuvenationKernel<T> {
    /// Move types drawn uniformly among those with an eligible pair.
    pub kinds: Vec<EditKind>,
    pub add_weight: AddWeightLaw<T>,
    /// Standard deviation of the additive Normal step in `PerturbWeight`.
    pub perturb_sd: T,
    /// Include the proposal ratio in the acceptance probability. Off by
    /// default: the edit kernel is then treated as symmetric.
    pub hastings: bool,
}

impl<T: Scalar> Default for RejuvenationKernel<T> {
    fn default() -> Self {
        Self {
            kinds: EditKind::ALL.to_vec(),
            add_weight: AddWeightLaw::Uniform { low: T::of(0.5), high: T::of(1.5) },
            perturb_sd: T::of(0.2),
            hastings: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejuvenationStats {
    pub proposals: usize,
    pub accepted: usize,
    pub rejected_cyclic: usize,
    /// Steps where no move type had an eligible pair.
    pub skipped: usize,
}

impl RejuvenationStats {
    pub fn accept_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }

    fn merge(mut self, o: Self) -> Self {
        self.proposals += o.proposals;
        self.accepted += o.accepted;
        self.rejected_cyclic += o.rejected_cyclic;
        self.skipped += o.skipped;
        self
    }
}

/// `(W'_ij, W'_ji)` after a local edit on `(i, j)`.
pub(crate) fn pair_after_edit<T: Scalar>(w: &WeightedDag<T>, e: &GraphEdit<T>) -> (T, T) {
    let (ij, ji) = (w.weight(e.i, e.j), w.weight(e.j, e.i));
    match e.kind {
        EditKind::AddEdge | EditKind::PerturbWeight => (e.weight.unwrap(), ji),
        EditKind::RemoveEdge => (T::zero(), ji),
        EditKind::FlipEdge => (T::zero(), ij),
    }
}

/// History grouped by unordered pair. A record's likelihood depends only on
/// the two weights of its own pair, so an edit on `{i, j}` only needs the
/// records filed under `{i, j}`.
struct ReplayIndex<T> {
    by_pair: HashMap<(usize, usize), Vec<(bool, Label, T)>>,
}

impl<T: Scalar> ReplayIndex<T> {
    fn new(history: &History) -> Self {
        let mut by_pair: HashMap<_, Vec<_>> = HashMap::new();
        for r in history.records() {
            let key = (r.i.min(r.j), r.i.max(r.j));
            let forward = r.i < r.j;
            let phi = T::of(r.frozen_feature.unwrap_or(0.0));
            by_pair.entry(key).or_default().push((forward, r.label, phi));
        }
        Self { by_pair }
    }

    /// Summed log-likelihood of the records on `{lo, hi}` given `W_lo,hi`, `W_hi,lo`.
    fn log_lik(&self, params: &ExpertParams<T>, lo: usize, hi: usize, w_lh: T, w_hl: T) -> T {
        let Some(recs) = self.by_pair.get(&(lo, hi)) else {
            return T::zero();
        };
        recs.iter()
            .map(|&(forward, label, phi)| {
                let dist = if forward {
                    params.likelihood_parts(w_lh, w_hl, phi)
                } else {
                    params.likelihood_parts(w_hl, w_lh, phi)
                };
                dist.prob(label).ln()
            })
            .sum()
    }

    fn edit_delta(&self, params: &ExpertParams<T>, w: &WeightedDag<T>, e: &GraphEdit<T>) -> T {
        let (lo, hi) = (e.i.min(e.j), e.i.max(e.j));
        if !self.by_pair.contains_key(&(lo, hi)) {
            return T::zero();
        }
        let (new_ij, new_ji) = pair_after_edit(w, e);
        let (new_lh, new_hl) = if e.i == lo { (new_ij, new_ji) } else { (new_ji, new_ij) };
        let after = self.log_lik(params, lo, hi, new_lh, new_hl);
        let before = self.log_lik(params, lo, hi, w.weight(lo, hi), w.weight(hi, lo));
        after - before
    }
}

fn kind_eligible(kind: EditKind, edges: usize, slots: usize) -> bool {
    match kind {
        EditKind::AddEdge => edges < slots,
        _ => edges > 0,
    }
}

fn eligible_kind_count(kinds: &[EditKind], edges: usize, slots: usize) -> usize {
    kinds.iter().filter(|k| kind_eligible(**k, edges, slots)).count()
}

/// `k`-th ordered pair `(i, j)`, `i != j`, whose presence matches `present`.
fn nth_pair<T: Scalar>(w: &WeightedDag<T>, present: bool, mut k: usize) -> (usize, usize) {
    let d = w.d();
    for i in 0..d {
        for j in 0..d {
            if i != j && w.has_edge(i, j) == present {
                if k == 0 {
                    return (i, j);
                }
                k -= 1;
            }
        }
    }
    unreachable!("pair index beyond eligible set")
}

enum StepOutcome {
    Skipped,
    Cyclic,
    Rejected,
    Accepted,
}

struct Mover<'a, T> {
    params: &'a ExpertParams<T>,
    prior: &'a PriorDensity<T>,
    kernel: &'a RejuvenationKernel<T>,
    replay: ReplayIndex<T>,
}

impl<T: Scalar> Mover<'_, T> {
    fn propose<R: Rng + ?Sized>(&self, g: &WeightedDag<T>, rng: &mut R) -> Option<GraphEdit<T>> {
        let d = g.d();
        let slots = d * (d - 1);
        let edges = g.edge_count();
        let eligible: Vec<EditKind> =
            self.kernel.kinds.iter().copied().filter(|k| kind_eligible(*k, edges, slots)).collect();
        if eligible.is_empty() {
            return None;
        }
        let kind = eligible[rng.random_range(0..eligible.len())];
        let edit = match kind {
            EditKind::AddEdge => {
                let (i, j) = nth_pair(g, false, rng.random_range(0..slots - edges));
                GraphEdit::add(i, j, self.kernel.add_weight.sample(rng))
            }
            EditKind::RemoveEdge => {
                let (i, j) = nth_pair(g, true, rng.random_range(0..edges));
                GraphEdit::remove(i, j)
            }
            EditKind::FlipEdge => {
                let (i, j) = nth_pair(g, true, rng.random_range(0..edges));
                GraphEdit::flip(i, j)
            }
            EditKind::PerturbWeight => {
                let (i, j) = nth_pair(g, true, rng.random_range(0..edges));
                let old = g.weight(i, j);
                let new = loop {
                    let z: f64 = StandardNormal.sample(rng);
                    let x = old + self.kernel.perturb_sd * T::of(z);
                    if x != T::zero() {
                        break x;
                    }
                };
                GraphEdit::perturb(i, j, new)
            }
        };
        Some(edit)
    }

    /// `log K(W | W') - log K(W' | W)` for an acyclic proposal.
    fn log_proposal_ratio(&self, g: &WeightedDag<T>, e: &GraphEdit<T>) -> T {
        let d = g.d();
        let slots = d * (d - 1);
        let edges = g.edge_count();
        let kinds = &self.kernel.kinds;
        let ln = |n: usize| T::of_usize(n).ln();
        let nk = eligible_kind_count(kinds, edges, slots);
        match e.kind {
            EditKind::AddEdge => {
                let nk2 = eligible_kind_count(kinds, edges + 1, slots);
                let fwd = -ln(nk) - ln(slots - edges) + self.kernel.add_weight.log_density(e.weight.unwrap());
                let rev = if kinds.contains(&EditKind::RemoveEdge) {
                    -ln(nk2) - ln(edges + 1)
                } else {
                    T::neg_infinity()
                };
                rev - fwd
            }
            EditKind::RemoveEdge => {
                let nk2 = eligible_kind_count(kinds, edges - 1, slots);
                let fwd = -ln(nk) - ln(edges);
                let rev = if kinds.contains(&EditKind::AddEdge) {
                    -ln(nk2) - ln(slots - edges + 1)
                        + self.kernel.add_weight.log_density(g.weight(e.i, e.j))
                } else {
                    T::neg_infinity()
                };
                rev - fwd
            }
            // edge count unchanged and the reverse move is the mirror edit
            EditKind::FlipEdge | EditKind::PerturbWeight => T::zero(),
        }
    }

    fn step<R: Rng + ?Sized>(&self, g: &mut WeightedDag<T>, log_prior: Option<&mut T>, rng: &mut R) -> StepOutcome {
        let Some(edit) = self.propose(g, rng) else {
            return StepOutcome::Skipped;
        };
        if !g.edit_keeps_acyclic(&edit) {
            return StepOutcome::Cyclic;
        }
        let prior_delta = self.prior.edit_delta(g, &edit);
        let mut log_alpha = prior_delta + self.replay.edit_delta(self.params, g, &edit);
        if self.kernel.hastings {
            log_alpha += self.log_proposal_ratio(g, &edit);
        }
        let u: f64 = rng.random();
        // NaN (e.g. -inf - -inf) rejects
        let accept = log_alpha >= T::zero() || T::of(u) < log_alpha.exp();
        if !accept {
            return StepOutcome::Rejected;
        }
        g.apply_edit_in_place(&edit).expect("proposal checked acyclic");
        if let Some(lp) = log_prior {
            *lp += prior_delta;
        }
        StepOutcome::Accepted
    }
}

/// Runs `mh_steps` Metropolis-Hastings graph edits on every particle,
/// targeting `q0(W) * prod_tau p(y_tau | W)`.
///
/// Each particle draws from its own generator seeded off `rng`, so results
/// do not depend on thread scheduling.
pub fn rejuvenate<T: Scalar, R: Rng + ?Sized>(
    pset: &mut ParticleSet<T>,
    history: &History,
    params: &ExpertParams<T>,
    prior: &PriorDensity<T>,
    kernel: &RejuvenationKernel<T>,
    mh_steps: usize,
    rng: &mut R,
) -> RejuvenationStats {
    let mover = Mover { params, prior, kernel, replay: ReplayIndex::new(history) };
    let seeds: Vec<u64> = (0..pset.len()).map(|_| rng.random()).collect();
    let mut log_prior: Vec<Option<T>> = match pset.log_prior() {
        Some(lp) => lp.iter().copied().map(Some).collect(),
        None => vec![None; pset.len()],
    };
    let stats = pset
        .particles_mut()
        .par_iter_mut()
        .zip(log_prior.par_iter_mut())
        .zip(seeds.par_iter())
        .map(|((g, lp), seed)| {
            let mut prng = ChaCha8Rng::seed_from_u64(*seed);
            let mut st = RejuvenationStats::default();
            for _ in 0..mh_steps {
                match mover.step(g, lp.as_mut(), &mut prng) {
                    StepOutcome::Skipped => st.skipped += 1,
                    StepOutcome::Cyclic => {
                        st.proposals += 1;
                        st.rejected_cyclic += 1;
                    }
                    StepOutcome::Rejected => st.proposals += 1,
                    StepOutcome::Accepted => {
                        st.proposals += 1;
                        st.accepted += 1;
                    }
                }
            }
            st
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(RejuvenationStats::default(), RejuvenationStats::merge);
    if let Some(dst) = pset.log_prior_mut() {
        for (d, s) in dst.iter_mut().zip(log_prior) {
            *d = s.expect("log prior tracked per particle");
        }
    }
    stats
}
