//! JSON interchange for graphs and particle snapshots.
//!
//! Weights are written as JSON numbers in shortest round-trip form and
//! parsed back exactly, so a save/load cycle is bit-exact for `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::graph::{BinaryGraph, WeightedDag};
use crate::posterior::ParticleSet;
use crate::scalar::Scalar;

/// `{"d": .., "names": [..], "edges": [[i, j, w], ..]}` with 0-based indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
    pub edges: Vec<(usize, usize, f64)>,
}

impl GraphJson {
    pub fn from_dag<T: Scalar>(w: &WeightedDag<T>) -> Self {
        Self {
            d: w.d(),
            names: w.names().map(<[String]>::to_vec),
            edges: w.edges().map(|(i, j, v)| (i, j, v.as_f64())).collect(),
        }
    }

    pub fn from_binary(g: &BinaryGraph) -> Self {
        Self { d: g.d(), names: g.names().map(<[String]>::to_vec), edges: g.edges().map(|(i, j)| (i, j, 1.0)).collect() }
    }

    pub fn to_dag<T: Scalar>(&self) -> Result<WeightedDag<T>> {
        let edges: Vec<(usize, usize, T)> = self.edges.iter().map(|&(i, j, w)| (i, j, T::of(w))).collect();
        let g = WeightedDag::from_edges(self.d, &edges).map_err(|e| match e {
            Error::Rejected => Error::Parse("graph contains a directed cycle".into()),
            other => other,
        })?;
        match &self.names {
            Some(n) => g.with_names(n.clone()),
            None => Ok(g),
        }
    }

    /// Any nonzero weight counts as an edge; cycles are allowed.
    pub fn to_binary(&self) -> Result<BinaryGraph> {
        let edges: Vec<(usize, usize)> = self.edges.iter().filter(|e| e.2 != 0.0).map(|&(i, j, _)| (i, j)).collect();
        let g = BinaryGraph::from_edges(self.d, &edges)?;
        match &self.names {
            Some(n) => g.with_names(n.clone()),
            None => Ok(g),
        }
    }
}

pub fn dag_to_json<T: Scalar>(w: &WeightedDag<T>) -> String {
    serde_json::to_string(&GraphJson::from_dag(w)).expect("graph serializes")
}

pub fn dag_from_json<T: Scalar>(s: &str) -> Result<WeightedDag<T>> {
    serde_json::from_str::<GraphJson>(s)?.to_dag()
}

pub fn save_dag<T: Scalar>(w: &WeightedDag<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, dag_to_json(w))?;
    Ok(())
}

pub fn load_dag<T: Scalar>(path: impl AsRef<Path>) -> Result<WeightedDag<T>> {
    dag_from_json(&std::fs::read_to_string(path)?)
}

pub fn save_binary_graph(g: &BinaryGraph, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serde_json::to_string(&GraphJson::from_binary(g))?)?;
    Ok(())
}

pub fn load_binary_graph(path: impl AsRef<Path>) -> Result<BinaryGraph> {
    serde_json::from_str::<GraphJson>(&std::fs::read_to_string(path)?)?.to_binary()
}

/// Particle snapshot: graphs, normalized weights and, when tracked, the
/// per-particle log prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticlesJson {
    pub particles: Vec<GraphJson>,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_prior: Option<Vec<f64>>,
}

impl ParticlesJson {
    pub fn from_set<T: Scalar>(p: &ParticleSet<T>) -> Self {
        Self {
            particles: p.particles().iter().map(GraphJson::from_dag).collect(),
            weights: p.weights().iter().map(|w| w.as_f64()).collect(),
            log_prior: p.log_prior().map(|l| l.iter().map(|v| v.as_f64()).collect()),
        }
    }

    /// Missing or empty weights mean uniform.
    pub fn to_set<T: Scalar>(&self) -> Result<ParticleSet<T>> {
        let graphs = self.particles.iter().map(GraphJson::to_dag).collect::<Result<Vec<WeightedDag<T>>>>()?;
        if graphs.is_empty() {
            return Err(contract("snapshot holds no particles"));
        }
        let set = if self.weights.is_empty() {
            ParticleSet::uniform(graphs)?
        } else {
            ParticleSet::new(graphs, self.weights.iter().map(|w| T::of(*w)).collect())?
        };
        match &self.log_prior {
            Some(l) => set.with_log_prior(l.iter().map(|v| T::of(*v)).collect()),
            None => Ok(set),
        }
    }
}

pub fn save_particles<T: Scalar>(p: &ParticleSet<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serde_json::to_string(&ParticlesJson::from_set(p))?)?;
    Ok(())
}

pub fn load_particles<T: Scalar>(path: impl AsRef<Path>) -> Result<ParticleSet<T>> {
    let raw = std::fs::read_to_string(path)?;
    // a bare array of graphs is accepted as a uniform snapshot
    if raw.trim_start().starts_with('[') {
        let graphs: Vec<GraphJson> = serde_json::from_str(&raw)?;
        return ParticlesJson { particles: graphs, weights: vec![], log_prior: None }.to_set();
    }
    serde_json::from_str::<ParticlesJson>(&raw)?.to_set()
}
