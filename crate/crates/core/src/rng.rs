//! Seeded random streams.
//!
//! Every consumer draws from its own ChaCha8 stream keyed by the session
//! seed, so adding draws in one place never shifts another. Per-particle
//! work derives sub-seeds from its stream sequentially before fanning out.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Identifier written to logs and checkpoints.
pub const RNG_VERSION: &str = "chacha8-streams-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Truth = 0,
    Prior = 1,
    Oracle = 2,
    Resample = 3,
    Rejuvenate = 4,
    Policy = 5,
}

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// `n` sub-seeds drawn in order from `rng`.
pub fn sub_seeds<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> Vec<u64> {
    (0..n).map(|_| rng.next_u64()).collect()
}
