//! Expert-in-the-loop Bayesian causal discovery over weighted DAGs.
//!
//! A particle posterior over DAGs is refined by noisy three-way answers
//! ("i causes j", "j causes i", "neither") from a simulated or human
//! expert. Queries are chosen by expected information gain.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`.

// `!(x >= 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod data;
pub mod error;
pub mod expert;
pub mod features;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod posterior;
pub mod prior;
pub mod rng;
pub mod scalar;
pub mod stats;

pub use acquisition::{eig, predictive, screen, select_query, CandidateSet, Policy, Selection};
pub use error::{Error, Result};
pub use expert::{likelihood, CategoricalDist3, ExpertParams, FeatureKind};
pub use features::FeatureTable;
pub use graph::{is_acyclic, BinaryGraph, EditKind, GraphEdit, Label, WeightedDag};
pub use oracle::Oracle;
pub use posterior::{
    rejuvenate, History, ParticleSet, PriorDensity, QueryRecord, RejuvenationKernel, RejuvenationStats,
};
pub use scalar::Scalar;

pub type Dag = WeightedDag<f64>;
pub type Particles = ParticleSet<f64>;
pub type Params = ExpertParams<f64>;
pub type Dist3 = CategoricalDist3<f64>;
