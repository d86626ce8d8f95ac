//! Session driver for cape: configuration, the query loop, artifacts,
//! checkpoints and the HTTP API used by the elicitation UI.

// `!(x >= 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod artifacts;
pub mod sachs;
pub mod server;
pub mod session;

pub use config::{OracleSpec, OutputSpec, PriorSpec, SessionConfig, TruthSpec};
pub use artifacts::RoundRecord;
pub use session::{particles_hash, run_session, Checkpoint, RoundOutcome, Session, SessionSummary, Status};
