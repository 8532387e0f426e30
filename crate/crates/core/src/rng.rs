//! Seed-addressed random streams.
//!
//! Every chain owns a `ChaCha8Rng` seeded from a single `u64`. Child streams
//! are derived with [`stream_seed`], which mixes the stream index into the
//! parent seed through the SplitMix64 finalizer:
//!
//! ```text
//! stream_seed(parent, i) = mix64(parent ^ mix64(i + 0x9E3779B97F4A7C15))
//! ```
//!
//! Derivation depends only on `(parent, i)`, never on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream type used by the sampler and simulation harness.
pub type StreamRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of child stream `index` under `parent`.
#[inline]
pub fn stream_seed(parent: u64, index: u64) -> u64 {
    mix64(parent ^ mix64(index.wrapping_add(GOLDEN_GAMMA)))
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}
