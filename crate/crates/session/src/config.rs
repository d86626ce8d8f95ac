//! Session configuration, read from TOML.

use std::path::{Path, PathBuf};

use cape_core::acquisition::Policy;
use cape_core::metrics::{PairSet, ShdMode};
use cape_core::oracle::EffectGraphParams;
use cape_core::posterior::{AddWeightLaw, RejuvenationKernel};
use cape_core::prior::{BootstrapParams, PerturbParams};
use cape_core::{EditKind, Error, ExpertParams, Result};
use serde::{Deserialize, Serialize};

/// Everything needed to reproduce a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub seed: u64,
    /// Rounds `T`.
    pub rounds: usize,
    /// Particles `S`. Ignored when the prior is read from a file.
    pub particles: usize,
    pub policy: Policy,
    /// Candidates kept by screening; `k >= D(D-1)` disables screening.
    #[serde(default = "default_screen_k")]
    pub screen_k: usize,
    /// Resample when `ESS < ess_threshold * S`.
    #[serde(default = "default_ess_threshold")]
    pub ess_threshold: f64,
    #[serde(default = "default_mh_steps")]
    pub mh_steps: usize,
    #[serde(default = "yes")]
    pub rejuvenation: bool,
    /// Allow asking the same pair twice.
    #[serde(default = "yes")]
    pub allow_requery: bool,
    /// Screen unordered pairs by existence in either direction.
    #[serde(default)]
    pub unordered_pairs: bool,
    #[serde(default)]
    pub entropy_pairs: PairSet,
    #[serde(default)]
    pub shd_mode: ShdMode,
    /// Use the fitted surrogate as the rejuvenation prior; otherwise flat.
    #[serde(default = "yes")]
    pub surrogate_prior: bool,
    /// Learner's expert model.
    #[serde(default)]
    pub expert: ExpertParams<f64>,
    pub oracle: OracleSpec,
    #[serde(default)]
    pub truth: TruthSpec,
    pub prior: PriorSpec,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_screen_k() -> usize {
    200
}

fn default_ess_threshold() -> f64 {
    0.5
}

fn default_mh_steps() -> usize {
    2
}

fn yes() -> bool {
    true
}

/// Source of answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSpec {
    /// Samples the expert model at the true graph.
    Simulated {
        /// Oracle-side expert model; the learner's when absent.
        #[serde(default)]
        expert: Option<ExpertParams<f64>>,
        #[serde(default)]
        sticky: bool,
    },
    /// Always the true label.
    Deterministic,
    /// Reads or builds a perturbation effect graph, which also becomes the
    /// reference graph for metrics.
    EffectGraph {
        /// Prebuilt graph JSON.
        #[serde(default)]
        graph: Option<PathBuf>,
        /// Interventional CSV to build from.
        #[serde(default)]
        data: Option<PathBuf>,
        #[serde(default)]
        params: EffectGraphParams,
        #[serde(default)]
        top_variance: Option<usize>,
    },
    /// Answers arrive over the HTTP API.
    Human {
        /// Seconds to wait before pausing; forever when absent.
        #[serde(default)]
        timeout_secs: Option<f64>,
    },
}

/// Ground-truth graph for simulated oracles and metrics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthSpec {
    #[default]
    None,
    ErdosRenyi {
        d: usize,
        #[serde(default = "default_edge_prob")]
        edge_prob: f64,
        #[serde(default = "default_weight_low")]
        weight_low: f64,
        #[serde(default = "default_weight_high")]
        weight_high: f64,
    },
    /// Graph JSON file.
    File { path: PathBuf },
    /// The 17-edge consensus signalling network over the 11 Sachs proteins.
    Sachs,
}

fn default_edge_prob() -> f64 {
    0.25
}

fn default_weight_low() -> f64 {
    0.5
}

fn default_weight_high() -> f64 {
    1.5
}

/// How the round-zero particles are built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    /// Noisy copies of the truth.
    Perturbed {
        #[serde(flatten)]
        params: PerturbParams,
    },
    /// Bootstrap linear DAGs fitted to observational data.
    Bootstrap {
        data: PathBuf,
        #[serde(flatten)]
        params: BootstrapParams,
        #[serde(default)]
        top_variance: Option<usize>,
    },
    /// Independent random DAGs.
    ErdosRenyi {
        d: usize,
        #[serde(default = "default_edge_prob")]
        edge_prob: f64,
        #[serde(default = "default_weight_low")]
        weight_low: f64,
        #[serde(default = "default_weight_high")]
        weight_high: f64,
    },
    /// A particle snapshot (see `cape_core::io`).
    File { path: PathBuf },
}

/// Rejuvenation proposal settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSpec {
    pub kinds: Vec<EditKind>,
    pub add_low: f64,
    pub add_high: f64,
    pub perturb_sd: f64,
    pub hastings: bool,
}

impl Default for KernelSpec {
    fn default() -> Self {
        let k = RejuvenationKernel::<f64>::default();
        Self { kinds: k.kinds, add_low: 0.5, add_high: 1.5, perturb_sd: k.perturb_sd, hastings: k.hastings }
    }
}

impl KernelSpec {
    pub fn kernel(&self) -> RejuvenationKernel<f64> {
        RejuvenationKernel {
            kinds: self.kinds.clone(),
            add_weight: if self.add_low == self.add_high {
                AddWeightLaw::Fixed { value: self.add_low }
            } else {
                AddWeightLaw::Uniform { low: self.add_low, high: self.add_high }
            },
            perturb_sd: self.perturb_sd,
            hastings: self.hastings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Artifact directory; nothing is written when absent.
    pub dir: Option<PathBuf>,
    /// Checkpoint period in rounds, on top of every resampling event.
    pub checkpoint_every: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: None, checkpoint_every: 25 }
    }
}

impl SessionConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config; relative data paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.oracle {
            OracleSpec::EffectGraph { graph, data, .. } => {
                graph.as_mut().map(fix);
                data.as_mut().map(fix);
            }
            OracleSpec::Simulated { .. } | OracleSpec::Deterministic | OracleSpec::Human { .. } => {}
        }
        if let TruthSpec::File { path } = &mut self.truth {
            fix(path);
        }
        match &mut self.prior {
            PriorSpec::Bootstrap { data, .. } => fix(data),
            PriorSpec::File { path } => fix(path),
            PriorSpec::Perturbed { .. } | PriorSpec::ErdosRenyi { .. } => {}
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.rounds < 1 {
            return bad("rounds must be >= 1");
        }
        if self.particles < 1 {
            return bad("particles must be >= 1");
        }
        if !(self.ess_threshold > 0.0 && self.ess_threshold < 1.0) {
            return bad("ess_threshold must lie in (0, 1)");
        }
        if self.screen_k < 1 {
            return bad("screen_k must be >= 1");
        }
        if self.output.checkpoint_every < 1 {
            return bad("output.checkpoint_every must be >= 1");
        }
        self.expert.validate()?;
        if let OracleSpec::Simulated { expert: Some(e), .. } = &self.oracle {
            e.validate()?;
        }
        let needs_truth = matches!(self.oracle, OracleSpec::Simulated { .. } | OracleSpec::Deterministic)
            || matches!(self.prior, PriorSpec::Perturbed { .. });
        if needs_truth && self.truth == TruthSpec::None {
            return bad("simulated and deterministic oracles and the perturbed prior need a truth graph");
        }
        if let OracleSpec::EffectGraph { graph, data, .. } = &self.oracle {
            if graph.is_some() == data.is_some() {
                return bad("effect_graph oracle needs exactly one of graph or data");
            }
        }
        if self.kernel.kinds.is_empty() && self.rejuvenation {
            return bad("kernel.kinds is empty while rejuvenation is on");
        }
        if !(self.kernel.add_low <= self.kernel.add_high) || !(self.kernel.perturb_sd > 0.0) {
            return bad("kernel needs add_low <= add_high and perturb_sd > 0");
        }
        Ok(())
    }

    /// The oracle's expert model.
    pub fn oracle_expert(&self) -> &ExpertParams<f64> {
        match &self.oracle {
            OracleSpec::Simulated { expert: Some(e), .. } => e,
            _ => &self.expert,
        }
    }

    /// The synthetic benchmark: 20 nodes, 10,000 particles, 190 rounds.
    pub fn synthetic_default(seed: u64, policy: Policy) -> Self {
        Self {
            seed,
            rounds: 190,
            particles: 10_000,
            policy,
            screen_k: default_screen_k(),
            ess_threshold: 0.6,
            mh_steps: default_mh_steps(),
            rejuvenation: true,
            allow_requery: true,
            unordered_pairs: false,
            entropy_pairs: PairSet::Candidates,
            shd_mode: ShdMode::Formula,
            surrogate_prior: true,
            expert: ExpertParams::default(),
            oracle: OracleSpec::Simulated { expert: None, sticky: false },
            truth: TruthSpec::ErdosRenyi {
                d: 20,
                edge_prob: default_edge_prob(),
                weight_low: default_weight_low(),
                weight_high: default_weight_high(),
            },
            prior: PriorSpec::Perturbed { params: PerturbParams::default() },
            kernel: KernelSpec::default(),
            output: OutputSpec::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
rounds = 5
particles = 50
policy = "eig"

[oracle]
kind = "simulated"

[truth]
kind = "erdos_renyi"
d = 4

[prior]
kind = "perturbed"
flip_prob = 0.1
"#;

    #[test]
    fn parses_minimal_config() {
        let c = SessionConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.screen_k, 200);
        assert_eq!(c.ess_threshold, 0.5);
        assert_eq!(c.expert, ExpertParams::default());
        assert_eq!(c.oracle_expert(), &c.expert);
        match c.prior {
            PriorSpec::Perturbed { params } => {
                assert_eq!(params.flip_prob, 0.1);
                assert_eq!(params.addremove_prob, 0.05);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let c = SessionConfig::synthetic_default(7, Policy::Random);
        let back = SessionConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_values() {
        for (from, to) in [
            ("rounds = 5", "rounds = 0"),
            ("particles = 50", "particles = 0"),
            ("policy = \"eig\"", "policy = \"best\""),
            ("d = 4", "d = 4\nbogus = 1"),
        ] {
            assert!(SessionConfig::from_toml_str(&MINIMAL.replace(from, to)).is_err(), "{to}");
        }
        let no_truth = MINIMAL.replace("kind = \"erdos_renyi\"\nd = 4", "kind = \"none\"");
        assert!(SessionConfig::from_toml_str(&no_truth).is_err());
        let c = MINIMAL.replace("policy = \"eig\"", "policy = \"eig\"\ness_threshold = 1.0");
        assert!(SessionConfig::from_toml_str(&c).is_err());
    }
}
