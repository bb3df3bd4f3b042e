//! Seeded random number streams.
//!
//! A run owns one master seed and splits it into fixed-purpose substreams:
//! the chain transitions and the reward coin flips never share a stream with
//! the agent, so two policies replayed on the same seed see the same hidden
//! state path. That makes regret comparisons paired and debugging sane.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Substream identifiers. Keep these stable: output files are byte-compared
/// across runs.
pub mod stream {
    /// Hidden-state chain: initial draw and every transition.
    pub const CHAIN: u64 = 0;
    /// Bernoulli reward coin flips.
    pub const REWARD: u64 = 1;
    /// Agent-side randomness (uniform exploration, baseline randomization).
    pub const AGENT: u64 = 2;
    /// Tensor power-method restarts.
    pub const ESTIMATOR: u64 = 3;
    /// Random candidates in the optimistic model search.
    pub const CANDIDATES: u64 = 4;
}

/// A master seed that hands out independent substreams.
#[derive(Debug, Clone, Copy)]
pub struct RunRng {
    seed: u64,
}

impl RunRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A fresh generator for the given substream. Streams with different ids
    /// never overlap; calling this twice with the same id restarts the stream.
    pub fn stream(&self, id: u64) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(id);
        rng
    }
}

/// Stable 64-bit mixer (splitmix64 finalizer). Used to derive per-run seeds
/// from (master seed, algorithm label, horizon, run index) so that adding a
/// configuration never changes the seeds of existing ones.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine a seed with a string label, stably across platforms and releases.
pub fn mix_label(seed: u64, label: &str) -> u64 {
    let mut h = seed;
    for b in label.as_bytes() {
        h = mix(h ^ u64::from(*b));
    }
    h
}
