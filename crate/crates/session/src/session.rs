//! The query loop: select, ask, update, log.

use std::path::{Path, PathBuf};
use std::time::Duration;

use cape_core::acquisition::{predictive_and_eig, screen_marginals, static_ranking, ScreenOptions};
use cape_core::data::{load_interventional_csv, load_numeric_csv, DataMatrix, PERTURBATION_COLUMN};
use cape_core::graph::ordered_pairs;
use cape_core::io::{load_binary_graph, load_particles, GraphJson, ParticlesJson};
use cape_core::metrics::{evaluate, MetricsRow, PairSet};
use cape_core::oracle::{build_effect_graph, human_channel, HumanOutlet, PendingQuery};
use cape_core::posterior::SurrogatePrior;
use cape_core::prior::{bootstrap_linear_prior, erdos_renyi_dag, perturbed_prior};
use cape_core::rng::{stream_rng, Stream, StreamRng, RNG_VERSION};
use cape_core::{
    rejuvenate, select_query, BinaryGraph, Dag, Error, FeatureTable, History, Label, Oracle, Particles,
    PriorDensity, QueryRecord, RejuvenationKernel, Result,
};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{OracleSpec, PriorSpec, SessionConfig, TruthSpec};
use crate::artifacts::{
    mark_incomplete, write_atomic, write_metrics_csv, LogSink, RoundRecord, CHECKPOINT_FILE, FINAL_PARTICLES_FILE,
    HISTORY_FILE, METRICS_FILE,
};
use crate::sachs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    /// Waiting on a human answer.
    Paused,
    Finished,
    /// No askable pair was left before the round budget ran out.
    Exhausted,
    Failed,
}

impl Status {
    pub fn is_done(self) -> bool {
        matches!(self, Status::Finished | Status::Exhausted | Status::Failed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Running => "running",
            Status::Paused => "paused",
            Status::Finished => "finished",
            Status::Exhausted => "exhausted",
            Status::Failed => "failed",
        }
    }
}

/// Generators for the per-round streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rngs {
    pub oracle: StreamRng,
    pub resample: StreamRng,
    pub rejuvenate: StreamRng,
    pub policy: StreamRng,
}

impl Rngs {
    pub fn new(seed: u64) -> Self {
        Self {
            oracle: stream_rng(seed, Stream::Oracle),
            resample: stream_rng(seed, Stream::Resample),
            rejuvenate: stream_rng(seed, Stream::Rejuvenate),
            policy: stream_rng(seed, Stream::Policy),
        }
    }
}

/// Result of one call to [`Session::run_round`].
#[derive(Debug, Clone, PartialEq)]
pub enum RoundOutcome {
    Advanced(Box<RoundRecord>),
    /// The human oracle timed out; the same query is asked again next call.
    Paused,
    Done(Status),
}

/// A selected query not yet answered.
#[derive(Debug, Clone)]
struct Prepared {
    round: usize,
    i: usize,
    j: usize,
    eig: Option<f64>,
    u: f64,
    predictive: [f64; 3],
    entropy_pairs: Vec<(usize, usize)>,
    phi: Option<f64>,
    policy_rng: StreamRng,
}

/// Everything needed to continue a session later.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub rng_version: String,
    pub config: SessionConfig,
    pub status: Status,
    pub particles: ParticlesJson,
    pub history: History,
    pub rngs: Rngs,
    pub static_ranking: Option<Vec<((usize, usize), f64)>>,
    pub records: Vec<RoundRecord>,
    pub prior: PriorDensity<f64>,
    pub sticky_memory: Vec<((usize, usize), Label)>,
    pub prior_hash: String,
}

/// Compact status for the API and the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub status: Status,
    pub round: usize,
    pub rounds: usize,
    pub d: usize,
    pub particles: usize,
    pub names: Option<Vec<String>>,
    pub policy: String,
    pub ess: f64,
    pub prior_hash: String,
    pub reason: Option<String>,
    pub last: Option<MetricsRow>,
}

pub struct Session {
    cfg: SessionConfig,
    names: Option<Vec<String>>,
    pset: Particles,
    history: History,
    oracle: Oracle<f64>,
    truth: Option<BinaryGraph>,
    prior: PriorDensity<f64>,
    kernel: RejuvenationKernel<f64>,
    rngs: Rngs,
    static_ranking: Option<Vec<((usize, usize), f64)>>,
    records: Vec<RoundRecord>,
    status: Status,
    reason: Option<String>,
    prior_hash: String,
    outlet: Option<HumanOutlet>,
    prepared: Option<Prepared>,
    sink: Option<LogSink>,
}

/// sha256 of the snapshot JSON, hex encoded.
pub fn particles_hash(pset: &Particles) -> String {
    let text = serde_json::to_string(&ParticlesJson::from_set(pset)).expect("snapshot serializes");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn binary_to_dag(g: &BinaryGraph) -> Result<Dag> {
    let edges: Vec<(usize, usize, f64)> = g.edges().map(|(i, j)| (i, j, 1.0)).collect();
    let dag = Dag::from_edges(g.d(), &edges)?;
    match g.names() {
        Some(n) => dag.with_names(n.to_vec()),
        None => Ok(dag),
    }
}

/// Observational rows: controls of an interventional file, or the whole file.
fn load_observational(path: &Path) -> Result<DataMatrix> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    let has_targets = rdr
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .any(|h| h.trim() == PERTURBATION_COLUMN);
    if has_targets {
        Ok(load_interventional_csv(path)?.control)
    } else {
        load_numeric_csv(path)
    }
}

/// Reorders a named graph onto `names` when both carry the same node set.
fn align(g: BinaryGraph, names: &[String]) -> Result<BinaryGraph> {
    let Some(own) = g.names() else { return Ok(g) };
    if own == names {
        return Ok(g);
    }
    let pos: Option<Vec<usize>> = own.iter().map(|n| names.iter().position(|m| m == n)).collect();
    match pos {
        Some(pos) if own.len() == names.len() => {
            let edges: Vec<(usize, usize)> = g.edges().map(|(i, j)| (pos[i], pos[j])).collect();
            BinaryGraph::from_edges(names.len(), &edges)?.with_names(names.to_vec())
        }
        _ => Err(Error::Config("reference graph node names do not match the particles".into())),
    }
}

/// Truth graph from the config; a DAG form is kept when one exists.
fn build_truth(cfg: &SessionConfig) -> Result<Option<(BinaryGraph, Option<Dag>)>> {
    let mut rng = stream_rng(cfg.seed, Stream::Truth);
    Ok(match &cfg.truth {
        TruthSpec::None => None,
        TruthSpec::ErdosRenyi { d, edge_prob, weight_low, weight_high } => {
            let dag: Dag = erdos_renyi_dag(*d, *edge_prob, *weight_low, *weight_high, &mut rng)?;
            Some((BinaryGraph::from_dag(&dag), Some(dag)))
        }
        TruthSpec::File { path } => {
            let gj: GraphJson = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            let bin = gj.to_binary()?;
            let dag = if bin.is_acyclic() { Some(gj.to_dag()?) } else { None };
            Some((bin, dag))
        }
        TruthSpec::Sachs => {
            let bin = sachs::reference_graph();
            let dag = binary_to_dag(&bin)?;
            Some((bin, Some(dag)))
        }
    })
}

fn realign_truth(cfg: &SessionConfig, truth: (BinaryGraph, Option<Dag>), names: &[String]) -> Result<(BinaryGraph, Option<Dag>)> {
    let bin = match cfg.truth {
        TruthSpec::Sachs => sachs::reference_graph_for(names)?,
        _ => align(truth.0, names)?,
    };
    let dag = match truth.1 {
        Some(d) if bin.names() == d.names() => Some(d),
        Some(_) => Some(binary_to_dag(&bin)?),
        None => None,
    };
    Ok((bin, dag))
}

fn build_prior(cfg: &SessionConfig, truth: Option<&Dag>) -> Result<Particles> {
    let mut rng = stream_rng(cfg.seed, Stream::Prior);
    let s = cfg.particles;
    match &cfg.prior {
        PriorSpec::Perturbed { params } => {
            let w = truth.ok_or_else(|| Error::Config("perturbed prior needs an acyclic truth graph".into()))?;
            perturbed_prior(w, params, s, &mut rng)
        }
        PriorSpec::Bootstrap { data, params, top_variance } => {
            let mut x = load_observational(data)?;
            if let Some(k) = top_variance {
                x = x.select_columns(&x.top_variance_columns(*k));
            }
            bootstrap_linear_prior(&x, params, s, &mut rng)
        }
        PriorSpec::ErdosRenyi { d, edge_prob, weight_low, weight_high } => {
            let graphs = (0..s)
                .map(|_| erdos_renyi_dag(*d, *edge_prob, *weight_low, *weight_high, &mut rng))
                .collect::<Result<Vec<Dag>>>()?;
            Particles::uniform(graphs)
        }
        PriorSpec::File { path } => load_particles(path),
    }
}

/// Oracle plus the reference graph used for metrics.
fn build_oracle(
    cfg: &SessionConfig,
    truth: Option<(BinaryGraph, Option<Dag>)>,
    names: Option<&[String]>,
) -> Result<(Oracle<f64>, Option<BinaryGraph>, Option<HumanOutlet>)> {
    let need_dag = |t: &Option<(BinaryGraph, Option<Dag>)>| -> Result<Dag> {
        t.as_ref()
            .and_then(|t| t.1.clone())
            .ok_or_else(|| Error::Config("this oracle needs an acyclic truth graph".into()))
    };
    Ok(match &cfg.oracle {
        OracleSpec::Simulated { sticky, .. } => {
            let dag = need_dag(&truth)?;
            (Oracle::simulated(dag, cfg.oracle_expert().clone(), *sticky), truth.map(|t| t.0), None)
        }
        OracleSpec::Deterministic => {
            let bin = truth.as_ref().map(|t| t.0.clone());
            match truth.and_then(|t| t.1) {
                Some(dag) => (Oracle::Deterministic(dag), bin, None),
                None => {
                    let g = bin.clone().ok_or_else(|| Error::Config("deterministic oracle needs a truth graph".into()))?;
                    (Oracle::EffectGraph(g), bin, None)
                }
            }
        }
        OracleSpec::EffectGraph { graph, data, params, top_variance } => {
            let g = match (graph, data) {
                (Some(path), _) => load_binary_graph(path)?,
                (None, Some(path)) => {
                    let mut x = load_interventional_csv(path)?;
                    if let Some(k) = top_variance {
                        x = x.select_columns(&x.control.top_variance_columns(*k));
                    }
                    build_effect_graph(&x, params)?.graph
                }
                (None, None) => return Err(Error::Config("effect_graph oracle needs graph or data".into())),
            };
            let g = match names {
                Some(n) => align(g, n)?,
                None => g,
            };
            (Oracle::EffectGraph(g.clone()), Some(g), None)
        }
        OracleSpec::Human { timeout_secs } => {
            let (inlet, outlet) = human_channel(timeout_secs.map(Duration::from_secs_f64));
            (Oracle::Human(inlet), truth.map(|t| t.0), Some(outlet))
        }
    })
}

impl Session {
    /// Builds truth, prior and oracle from `cfg`.
    pub fn new(cfg: SessionConfig) -> Result<Self> {
        cfg.validate()?;
        let truth = build_truth(&cfg)?;
        let mut pset = build_prior(&cfg, truth.as_ref().and_then(|t| t.1.as_ref()))?;
        let names = pset.particles()[0].names().map(<[String]>::to_vec);
        let truth = match (truth, &names) {
            (Some(t), Some(n)) => Some(realign_truth(&cfg, t, n)?),
            (t, _) => t,
        };
        let prior = if cfg.surrogate_prior {
            let s = SurrogatePrior::fit(&pset);
            let lp = pset.particles().iter().map(|w| s.log_density(w)).collect();
            pset = pset.with_log_prior(lp)?;
            PriorDensity::Surrogate(s)
        } else {
            PriorDensity::Uniform
        };
        Self::assemble(cfg, pset, truth, prior)
    }

    /// Starts a session from an explicit initial posterior.
    pub fn from_particles(cfg: SessionConfig, pset: Particles) -> Result<Self> {
        cfg.validate()?;
        let names = pset.particles()[0].names().map(<[String]>::to_vec);
        let truth = match (build_truth(&cfg)?, &names) {
            (Some(t), Some(n)) => Some(realign_truth(&cfg, t, n)?),
            (t, _) => t,
        };
        let prior = if cfg.surrogate_prior && pset.log_prior().is_some() {
            PriorDensity::Surrogate(SurrogatePrior::fit(&pset))
        } else if cfg.surrogate_prior {
            let s = SurrogatePrior::fit(&pset);
            let lp = pset.particles().iter().map(|w| s.log_density(w)).collect();
            return Self::assemble(cfg, pset.with_log_prior(lp)?, truth, PriorDensity::Surrogate(s));
        } else {
            PriorDensity::Uniform
        };
        Self::assemble(cfg, pset, truth, prior)
    }

    fn assemble(
        cfg: SessionConfig,
        pset: Particles,
        truth: Option<(BinaryGraph, Option<Dag>)>,
        prior: PriorDensity<f64>,
    ) -> Result<Self> {
        let names = pset.particles()[0].names().map(<[String]>::to_vec);
        let (oracle, truth, outlet) = build_oracle(&cfg, truth, names.as_deref())?;
        if let Some(t) = &truth {
            if t.d() != pset.d() {
                return Err(Error::Config(format!("truth has {} nodes, particles have {}", t.d(), pset.d())));
            }
        }
        let static_ranking = (cfg.policy == cape_core::Policy::Static).then(|| {
            let f = features(&pset, &cfg);
            static_ranking(&pset, &cfg.expert, f.as_ref())
        });
        let prior_hash = particles_hash(&pset);
        Ok(Self {
            kernel: cfg.kernel.kernel(),
            rngs: Rngs::new(cfg.seed),
            cfg,
            names,
            pset,
            history: History::new(),
            oracle,
            truth,
            prior,
            static_ranking,
            records: Vec::new(),
            status: Status::Running,
            reason: None,
            prior_hash,
            outlet,
            prepared: None,
            sink: None,
        })
    }

    /// Continues from a checkpoint file. When the config names an output
    /// directory the log there is rewritten from the stored rounds.
    pub fn resume(path: impl AsRef<Path>) -> Result<Self> {
        let cp: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_checkpoint(cp)
    }

    pub fn from_checkpoint(cp: Checkpoint) -> Result<Self> {
        if cp.rng_version != RNG_VERSION {
            return Err(Error::Config(format!("checkpoint uses generator {}, this build {}", cp.rng_version, RNG_VERSION)));
        }
        let pset: Particles = cp.particles.to_set()?;
        let names = pset.particles()[0].names().map(<[String]>::to_vec);
        let truth = match (build_truth(&cp.config)?, &names) {
            (Some(t), Some(n)) => Some(realign_truth(&cp.config, t, n)?),
            (t, _) => t,
        };
        let (mut oracle, truth, outlet) = build_oracle(&cp.config, truth, names.as_deref())?;
        if let Oracle::Simulated { memory, .. } = &mut oracle {
            memory.extend(cp.sticky_memory.iter().copied());
        }
        let status = if cp.status == Status::Paused { Status::Running } else { cp.status };
        let mut s = Self {
            kernel: cp.config.kernel.kernel(),
            cfg: cp.config,
            names,
            pset,
            history: cp.history,
            oracle,
            truth,
            prior: cp.prior,
            rngs: cp.rngs,
            static_ranking: cp.static_ranking,
            records: cp.records,
            status,
            reason: None,
            prior_hash: cp.prior_hash,
            outlet,
            prepared: None,
            sink: None,
        };
        if s.cfg.output.dir.is_some() {
            s.open_log()?;
            let recs = s.records.clone();
            if let Some(sink) = &mut s.sink {
                for r in &recs {
                    sink.round(r)?;
                }
            }
        }
        Ok(s)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn particles(&self) -> &Particles {
        &self.pset
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn status(&self) -> Status {
        self.status
    }

    /// Rounds answered so far.
    pub fn round(&self) -> usize {
        self.history.len()
    }

    pub fn d(&self) -> usize {
        self.pset.d()
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn truth(&self) -> Option<&BinaryGraph> {
        self.truth.as_ref()
    }

    pub fn prior_hash(&self) -> &str {
        &self.prior_hash
    }

    /// UI side of the human channel, for human sessions.
    pub fn human_outlet(&self) -> Option<HumanOutlet> {
        self.outlet.clone()
    }

    /// Changes how long a human query waits before the round pauses.
    pub fn set_human_timeout(&mut self, timeout: Option<Duration>) {
        if let Oracle::Human(inlet) = &mut self.oracle {
            inlet.set_timeout(timeout);
        }
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            status: self.status,
            round: self.round(),
            rounds: self.cfg.rounds,
            d: self.d(),
            particles: self.pset.len(),
            names: self.names.clone(),
            policy: self.cfg.policy.as_str().to_string(),
            ess: self.pset.ess(),
            prior_hash: self.prior_hash.clone(),
            reason: self.reason.clone(),
            last: self.records.last().map(|r| r.metrics),
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let sticky_memory = match &self.oracle {
            Oracle::Simulated { memory, .. } => {
                let mut m: Vec<_> = memory.iter().map(|(k, v)| (*k, *v)).collect();
                m.sort_by_key(|e| e.0);
                m
            }
            _ => Vec::new(),
        };
        Checkpoint {
            rng_version: RNG_VERSION.to_string(),
            config: self.cfg.clone(),
            status: self.status,
            particles: ParticlesJson::from_set(&self.pset),
            history: self.history.clone(),
            rngs: self.rngs.clone(),
            static_ranking: self.static_ranking.clone(),
            records: self.records.clone(),
            prior: self.prior.clone(),
            sticky_memory,
            prior_hash: self.prior_hash.clone(),
        }
    }

    pub fn write_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), serde_json::to_string(&self.checkpoint())?.as_bytes())
    }

    fn out_dir(&self) -> Option<PathBuf> {
        self.cfg.output.dir.clone()
    }

    fn open_log(&mut self) -> Result<()> {
        let Some(dir) = self.out_dir() else { return Ok(()) };
        let header = json!({
            "event": "header",
            "format": 1,
            "rng": RNG_VERSION,
            "prior_hash": self.prior_hash,
            "d": self.d(),
            "particles": self.pset.len(),
            "names": self.names,
            "config": self.cfg,
        });
        self.sink = Some(LogSink::create(&dir, &header)?);
        Ok(())
    }

    fn start_artifacts(&mut self) -> Result<()> {
        if self.sink.is_some() || self.out_dir().is_none() {
            return Ok(());
        }
        self.open_log()
    }

    fn select(&mut self) -> Result<Option<Prepared>> {
        let round = self.round() + 1;
        let d = self.d();
        let feats = features(&self.pset, &self.cfg);
        let marg = self.pset.edge_marginals();
        let opts = ScreenOptions {
            unordered: self.cfg.unordered_pairs,
            exclude: (!self.cfg.allow_requery).then_some(&self.history),
        };
        let cands = screen_marginals(&marg, d, self.cfg.screen_k, opts);
        let mut policy_rng = self.rngs.policy.clone();
        let sel = match select_query(
            &cands,
            self.cfg.policy,
            &self.pset,
            &self.cfg.expert,
            feats.as_ref(),
            &mut policy_rng,
            self.static_ranking.as_deref(),
            Some(&self.history),
        ) {
            Ok(s) => s,
            Err(Error::Exhausted) => return Ok(None),
            Err(e) => return Err(e),
        };
        let (i, j) = (sel.i, sel.j);
        let (pred, gain) = predictive_and_eig(&self.pset, i, j, &self.cfg.expert, feats.as_ref());
        let p = marg[i * d + j];
        let u = if self.cfg.unordered_pairs {
            let q = (p + marg[j * d + i]).min(1.0);
            q * (1.0 - q)
        } else {
            p * (1.0 - p)
        };
        let entropy_pairs = match self.cfg.entropy_pairs {
            PairSet::Candidates if !cands.is_empty() => cands.pairs.clone(),
            _ => ordered_pairs(d).collect(),
        };
        Ok(Some(Prepared {
            round,
            i,
            j,
            eig: Some(sel.eig.unwrap_or(gain)),
            u,
            predictive: pred.to_f64(),
            entropy_pairs,
            phi: feats.as_ref().map(|f| f.get(i, j)),
            policy_rng,
        }))
    }

    /// Runs one round. Errors leave the session marked failed.
    pub fn run_round(&mut self) -> Result<RoundOutcome> {
        match self.try_round() {
            Ok(o) => Ok(o),
            Err(e) => {
                self.status = Status::Failed;
                self.reason = Some(e.to_string());
                if let Some(dir) = self.out_dir() {
                    mark_incomplete(&dir, &e.to_string());
                }
                Err(e)
            }
        }
    }

    fn try_round(&mut self) -> Result<RoundOutcome> {
        if self.status.is_done() {
            return Ok(RoundOutcome::Done(self.status));
        }
        if self.round() >= self.cfg.rounds {
            self.finish(Status::Finished, None)?;
            return Ok(RoundOutcome::Done(self.status));
        }
        self.start_artifacts()?;
        let prep = match self.prepared.take() {
            Some(p) => p,
            None => match self.select()? {
                Some(p) => p,
                None => {
                    log::warn!("no askable pair left after {} rounds", self.round());
                    self.finish(Status::Exhausted, Some("no askable pair left".into()))?;
                    return Ok(RoundOutcome::Done(self.status));
                }
            },
        };
        let mut oracle_rng = self.rngs.oracle.clone();
        let answer = match &mut self.oracle {
            Oracle::Human(inlet) => inlet.ask(PendingQuery {
                round: prep.round,
                i: prep.i,
                j: prep.j,
                predictive: Some(prep.predictive),
                eig: prep.eig,
            }),
            o => o.answer(prep.i, prep.j, &mut oracle_rng),
        };
        let label = match answer {
            Ok(l) => l,
            Err(Error::OracleTimeout) => {
                self.prepared = Some(prep);
                self.status = Status::Paused;
                return Ok(RoundOutcome::Paused);
            }
            Err(e) => return Err(e),
        };
        self.status = Status::Running;
        self.rngs.policy = prep.policy_rng.clone();
        self.rngs.oracle = oracle_rng;
        let rec = self.apply(&prep, label)?;
        if let Some(sink) = &mut self.sink {
            sink.round(&rec)?;
        }
        self.records.push(rec.clone());
        if let Some(dir) = self.out_dir() {
            if rec.resampled || rec.round % self.cfg.output.checkpoint_every == 0 {
                self.write_checkpoint(dir.join(CHECKPOINT_FILE))?;
            }
        }
        if self.round() >= self.cfg.rounds {
            self.finish(Status::Finished, None)?;
        }
        Ok(RoundOutcome::Advanced(Box::new(rec)))
    }

    /// Posterior update for an answer; shared by the live loop and replay.
    fn apply(&mut self, prep: &Prepared, label: Label) -> Result<RoundRecord> {
        let (i, j) = (prep.i, prep.j);
        self.pset.reweight(i, j, label, &self.cfg.expert, prep.phi)?;
        self.history.push(QueryRecord {
            round: prep.round,
            i,
            j,
            label,
            policy: self.cfg.policy.as_str().to_string(),
            eig_value: prep.eig,
            frozen_feature: prep.phi,
        })?;
        let ess_before = self.pset.ess();
        let resampled = ess_before < self.cfg.ess_threshold * self.pset.len() as f64;
        let mut accept = None;
        if resampled {
            self.pset.resample(&mut self.rngs.resample);
            if self.cfg.rejuvenation && self.cfg.mh_steps > 0 {
                let stats = rejuvenate(
                    &mut self.pset,
                    &self.history,
                    &self.cfg.expert,
                    &self.prior,
                    &self.kernel,
                    self.cfg.mh_steps,
                    &mut self.rngs.rejuvenate,
                );
                accept = Some(stats.accept_rate());
            }
        }
        let feats = features(&self.pset, &self.cfg);
        let metrics = evaluate(
            &self.pset,
            self.truth.as_ref(),
            &self.cfg.expert,
            feats.as_ref(),
            &prep.entropy_pairs,
            self.cfg.shd_mode,
        )?;
        Ok(RoundRecord {
            round: prep.round,
            pair: [i, j],
            label,
            policy: self.cfg.policy,
            eig: prep.eig,
            u: prep.u,
            predictive: prep.predictive,
            ess_before,
            resampled,
            rejuvenation_accept_rate: accept,
            metrics,
        })
    }

    /// Feeds recorded answers through the update without consulting the
    /// oracle or the policy. Metrics are taken over all pairs.
    pub fn replay(&mut self, history: &History) -> Result<()> {
        for r in history.records() {
            let prep = Prepared {
                round: self.round() + 1,
                i: r.i,
                j: r.j,
                eig: r.eig_value,
                u: f64::NAN,
                predictive: [f64::NAN; 3],
                entropy_pairs: ordered_pairs(self.d()).collect(),
                phi: r.frozen_feature,
                policy_rng: self.rngs.policy.clone(),
            };
            let rec = self.apply(&prep, r.label)?;
            self.records.push(rec);
        }
        Ok(())
    }

    fn finish(&mut self, status: Status, reason: Option<String>) -> Result<()> {
        self.status = status;
        self.reason = reason;
        if let Oracle::Human(inlet) = &self.oracle {
            inlet.clear();
        }
        self.prepared = None;
        self.write_final()
    }

    /// Writes final snapshots, metrics table and the log trailer.
    fn write_final(&mut self) -> Result<()> {
        let Some(dir) = self.out_dir() else { return Ok(()) };
        self.start_artifacts()?;
        write_atomic(
            &dir.join(FINAL_PARTICLES_FILE),
            serde_json::to_string(&ParticlesJson::from_set(&self.pset))?.as_bytes(),
        )?;
        write_atomic(&dir.join(HISTORY_FILE), serde_json::to_string_pretty(&self.history)?.as_bytes())?;
        write_metrics_csv(&dir.join(METRICS_FILE), &self.records)?;
        self.write_checkpoint(dir.join(CHECKPOINT_FILE))?;
        let (status, rounds, reason) = (self.status, self.round(), self.reason.clone());
        if let Some(sink) = &mut self.sink {
            sink.end(status.as_str(), rounds, reason.as_deref())?;
        }
        Ok(())
    }

    /// Runs rounds until the session ends or pauses on a human answer.
    pub fn run(&mut self) -> Result<Status> {
        loop {
            match self.run_round()? {
                RoundOutcome::Advanced(_) => {}
                RoundOutcome::Paused => return Ok(Status::Paused),
                RoundOutcome::Done(s) => return Ok(s),
            }
        }
    }

    /// Saves a checkpoint and the metrics so far without ending the
    /// session, so that it can be resumed.
    pub fn interrupt(&mut self) -> Result<()> {
        if self.status.is_done() {
            return Ok(());
        }
        self.status = Status::Paused;
        self.prepared = None;
        let Some(dir) = self.out_dir() else { return Ok(()) };
        std::fs::create_dir_all(&dir)?;
        write_metrics_csv(&dir.join(METRICS_FILE), &self.records)?;
        self.write_checkpoint(dir.join(CHECKPOINT_FILE))
    }
}

fn features(pset: &Particles, cfg: &SessionConfig) -> Option<FeatureTable<f64>> {
    if cfg.expert.uses_features() {
        FeatureTable::compute(pset, &cfg.expert.feature)
    } else {
        None
    }
}

/// Builds and runs a session to completion.
pub fn run_session(cfg: SessionConfig) -> Result<Session> {
    let mut s = Session::new(cfg)?;
    if s.oracle.is_human() {
        return Err(Error::Config("human sessions run through the server".into()));
    }
    s.run()?;
    Ok(s)
}
