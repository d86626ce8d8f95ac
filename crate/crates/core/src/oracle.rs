//! Sources of expert answers.

use std::collections::HashMap;
use std::sync::mpsc::{sync_channel, Receiver, RecvTimeoutError, SyncSender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{mean, InterventionalData};
use crate::error::{contract, Error, Result};
use crate::expert::{CategoricalDist3, ExpertParams};
use crate::graph::{BinaryGraph, Label, WeightedDag};
use crate::scalar::Scalar;
use crate::stats::{benjamini_hochberg, ks_two_sample};

/// Draws a label from `dist` with one uniform variate.
pub fn sample_label<T: Scalar, R: Rng + ?Sized>(dist: &CategoricalDist3<T>, rng: &mut R) -> Label {
    let u: f64 = rng.random();
    let p = dist.to_f64();
    if u < p[0] {
        Label::Reverse
    } else if u < p[0] + p[1] {
        Label::Forward
    } else {
        Label::NoEdge
    }
}

/// Where answers come from.
pub enum Oracle<T> {
    /// Samples from the expert likelihood at the true graph. Structural
    /// features are not available to it, so the score uses `phi = 0`.
    Simulated {
        truth: WeightedDag<T>,
        params: ExpertParams<T>,
        /// Repeat the first answer for a pair instead of resampling.
        sticky: bool,
        memory: HashMap<(usize, usize), Label>,
    },
    Deterministic(WeightedDag<T>),
    EffectGraph(BinaryGraph),
    Human(HumanInlet),
}

impl<T: Scalar> Oracle<T> {
    pub fn simulated(truth: WeightedDag<T>, params: ExpertParams<T>, sticky: bool) -> Self {
        Oracle::Simulated { truth, params, sticky, memory: HashMap::new() }
    }

    pub fn is_human(&self) -> bool {
        matches!(self, Oracle::Human(_))
    }

    /// The reference adjacency, when the oracle has one.
    pub fn truth(&self) -> Option<BinaryGraph> {
        match self {
            Oracle::Simulated { truth, .. } | Oracle::Deterministic(truth) => Some(BinaryGraph::from_dag(truth)),
            Oracle::EffectGraph(g) => Some(g.clone()),
            Oracle::Human(_) => None,
        }
    }

    pub fn d(&self) -> Option<usize> {
        match self {
            Oracle::Simulated { truth, .. } | Oracle::Deterministic(truth) => Some(truth.d()),
            Oracle::EffectGraph(g) => Some(g.d()),
            Oracle::Human(_) => None,
        }
    }

    /// Answers `(i, j)`. The human oracle publishes a bare query and blocks.
    pub fn answer<R: Rng + ?Sized>(&mut self, i: usize, j: usize, rng: &mut R) -> Result<Label> {
        if i == j {
            return Err(contract("oracle query needs i != j"));
        }
        if let Some(d) = self.d() {
            if i >= d || j >= d {
                return Err(contract(format!("pair ({i}, {j}) out of range")));
            }
        }
        match self {
            Oracle::Simulated { truth, params, sticky, memory } => {
                if *sticky {
                    if let Some(l) = memory.get(&(i, j)) {
                        return Ok(*l);
                    }
                    if let Some(l) = memory.get(&(j, i)) {
                        return Ok(l.swapped());
                    }
                }
                let dist = params.likelihood_parts(truth.weight(i, j), truth.weight(j, i), T::zero());
                let l = sample_label(&dist, rng);
                if *sticky {
                    memory.insert((i, j), l);
                }
                Ok(l)
            }
            Oracle::Deterministic(truth) => truth.true_label(i, j),
            Oracle::EffectGraph(g) => g.label(i, j),
            Oracle::Human(inlet) => inlet.ask(PendingQuery { round: 0, i, j, predictive: None, eig: None }),
        }
    }
}

/// The query waiting for a human answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingQuery {
    pub round: usize,
    pub i: usize,
    pub j: usize,
    pub predictive: Option<[f64; 3]>,
    pub eig: Option<f64>,
}

/// Why a submitted answer was refused.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SubmitError {
    #[error("no query is pending")]
    NoPending,
    #[error("answer is for pair ({got_i}, {got_j}) but the pending pair is ({i}, {j})")]
    Mismatch { i: usize, j: usize, got_i: usize, got_j: usize },
    #[error("the session is no longer listening")]
    Closed,
}

struct Shared {
    pending: Mutex<Option<PendingQuery>>,
}

/// Session side of the human channel.
pub struct HumanInlet {
    shared: Arc<Shared>,
    rx: Receiver<(usize, usize, Label)>,
    timeout: Option<Duration>,
}

/// UI side of the human channel. Cheap to clone.
#[derive(Clone)]
pub struct HumanOutlet {
    shared: Arc<Shared>,
    tx: SyncSender<(usize, usize, Label)>,
}

/// A connected inlet/outlet pair holding at most one pending query.
pub fn human_channel(timeout: Option<Duration>) -> (HumanInlet, HumanOutlet) {
    let shared = Arc::new(Shared { pending: Mutex::new(None) });
    let (tx, rx) = sync_channel(1);
    (HumanInlet { shared: shared.clone(), rx, timeout }, HumanOutlet { shared, tx })
}

impl HumanInlet {
    /// Publishes `query` and waits for its answer.
    ///
    /// On timeout the query stays published so a late answer is picked up
    /// by the next call for the same pair.
    pub fn ask(&mut self, query: PendingQuery) -> Result<Label> {
        let (i, j) = (query.i, query.j);
        {
            let mut slot = self.shared.pending.lock().unwrap_or_else(|e| e.into_inner());
            *slot = Some(query);
        }
        loop {
            let got = match self.timeout {
                Some(t) => match self.rx.recv_timeout(t) {
                    Ok(v) => v,
                    Err(RecvTimeoutError::Timeout) => return Err(Error::OracleTimeout),
                    Err(RecvTimeoutError::Disconnected) => return Err(Error::OracleTimeout),
                },
                None => self.rx.recv().map_err(|_| Error::OracleTimeout)?,
            };
            if (got.0, got.1) == (i, j) {
                self.clear();
                return Ok(got.2);
            }
            log::warn!("discarding stale answer for ({}, {})", got.0, got.1);
        }
    }

    pub fn pending(&self) -> Option<PendingQuery> {
        self.shared.pending.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn set_timeout(&mut self, timeout: Option<Duration>) {
        self.timeout = timeout;
    }

    pub fn clear(&self) {
        *self.shared.pending.lock().unwrap_or_else(|e| e.into_inner()) = None;
    }
}

impl HumanOutlet {
    pub fn pending(&self) -> Option<PendingQuery> {
        self.shared.pending.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Delivers an answer for the pending pair and clears it.
    pub fn submit(&self, i: usize, j: usize, label: Label) -> std::result::Result<(), SubmitError> {
        let mut slot = self.shared.pending.lock().unwrap_or_else(|e| e.into_inner());
        match slot.as_ref() {
            None => Err(SubmitError::NoPending),
            Some(q) if (q.i, q.j) != (i, j) => Err(SubmitError::Mismatch { i: q.i, j: q.j, got_i: i, got_j: j }),
            Some(_) => {
                self.tx.try_send((i, j, label)).map_err(|_| SubmitError::Closed)?;
                *slot = None;
                Ok(())
            }
        }
    }
}

/// Thresholds for building an effect graph from perturbation data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EffectGraphParams {
    pub alpha: f64,
    pub min_effect: f64,
    pub min_group_n: usize,
}

impl Default for EffectGraphParams {
    fn default() -> Self {
        Self { alpha: 0.05, min_effect: 0.3, min_group_n: 25 }
    }
}

/// One tested (perturbed, measured) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectTest {
    pub target: usize,
    pub measured: usize,
    pub ks: f64,
    pub p_value: f64,
    pub q_value: f64,
    pub mean_shift: f64,
}

/// Effect graph and the tests behind it.
#[derive(Debug, Clone)]
pub struct EffectGraphBuild {
    pub graph: BinaryGraph,
    pub tests: Vec<EffectTest>,
    /// Targets dropped for having too few samples.
    pub dropped: Vec<usize>,
}

/// `A_ij = 1` when perturbing `i` shifts the distribution of `j`: a
/// two-sample KS test against control, BH-adjusted over all tests, and an
/// absolute mean shift of at least `min_effect`.
pub fn build_effect_graph(data: &InterventionalData, params: &EffectGraphParams) -> Result<EffectGraphBuild> {
    let d = data.d();
    if data.control.n() == 0 {
        return Err(Error::Config("effect graph needs control samples".into()));
    }
    if !(params.alpha > 0.0 && params.alpha < 1.0) {
        return Err(Error::Config("alpha must lie in (0, 1)".into()));
    }
    let control: Vec<Vec<f64>> = (0..d).map(|c| data.control.column(c)).collect();
    let control_mean: Vec<f64> = control.iter().map(|c| finite_mean(c)).collect();
    let mut tests = Vec::new();
    let mut dropped = Vec::new();
    for (target, group) in &data.groups {
        if group.n() < params.min_group_n {
            dropped.push(*target);
            continue;
        }
        for j in (0..d).filter(|j| j != target) {
            let x = group.column(j);
            let ks = ks_two_sample(&x, &control[j]);
            tests.push(EffectTest {
                target: *target,
                measured: j,
                ks: ks.statistic,
                p_value: ks.p_value,
                q_value: 1.0,
                mean_shift: finite_mean(&x) - control_mean[j],
            });
        }
    }
    let p: Vec<f64> = tests.iter().map(|t| t.p_value).collect();
    for (t, q) in tests.iter_mut().zip(benjamini_hochberg(&p)) {
        t.q_value = q;
    }
    let mut adj = vec![false; d * d];
    for t in &tests {
        if t.q_value <= params.alpha && t.mean_shift.abs() >= params.min_effect {
            adj[t.target * d + t.measured] = true;
        }
    }
    let graph = BinaryGraph::new(d, adj)?.with_names(data.names().to_vec())?;
    Ok(EffectGraphBuild { graph, tests, dropped })
}

fn finite_mean(x: &[f64]) -> f64 {
    let v: Vec<f64> = x.iter().copied().filter(|v| v.is_finite()).collect();
    mean(&v)
}
