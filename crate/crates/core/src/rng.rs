//! Seed derivation. Every random draw in the crate comes from a
//! [`ChaCha8Rng`] seeded through [`substream`], so any component's stream
//! is a pure function of the master seed plus fixed integer tags. Replays
//! are bit-identical regardless of evaluation order because no stream is
//! ever shared between two purposes.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; decorrelates nearby seeds and tags.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// RNG for the stream identified by `(seed, tags)`. Tag order matters;
/// each call site uses a unique leading purpose tag from [`stream`].
pub fn substream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut acc = mix(seed);
    for (i, &t) in tags.iter().enumerate() {
        acc = mix(acc ^ mix(t.wrapping_add(i as u64 + 1)));
    }
    ChaCha8Rng::seed_from_u64(acc)
}

/// Purpose tags for [`substream`]. Keeping them in one table guarantees no
/// two call sites collide.
pub mod stream {
    /// Synthetic catalog construction.
    pub const SYNTH_CATALOG: u64 = 1;
    /// Per-user synthetic log generation (tag followed by user index).
    pub const SYNTH_USER: u64 = 2;
    /// Training-target position draw (tag followed by log index).
    pub const EXAMPLE_TARGET: u64 = 3;
    /// Negative sampling (tag followed by example index).
    pub const NEGATIVES: u64 = 4;
    /// Truth placement inside a multiple-choice question.
    pub const MCQ_SLOT: u64 = 5;
    /// Batch index selection (tag followed by step).
    pub const BATCH: u64 = 6;
    /// Summary rollout (tag followed by step and episode index).
    pub const ROLLOUT: u64 = 7;
    /// Pre-training probe pass.
    pub const PROBE: u64 = 8;
    /// Auto-rater summary placement coin.
    pub const RATER_PLACEMENT: u64 = 9;
    /// Baseline random-X subsequence selection.
    pub const BASELINE_RANDOM: u64 = 10;
    /// Initial policy parameter draw.
    pub const PARAM_INIT: u64 = 11;
}
