//! Seed derivation.
//!
//! Every random decision in the crate draws from a [`ChaCha8Rng`] whose seed
//! is derived with [`mix`], a SplitMix64 step keyed on `(base, stream)`.
//! The finalizer is a bijection on `u64`, so distinct streams under one base
//! always yield distinct seeds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of stream `stream` under `base`:
/// `splitmix64(base + (stream + 1) * 0x9E3779B97F4A7C15)` (wrapping).
pub fn mix(base: u64, stream: u64) -> u64 {
    splitmix64(base.wrapping_add(stream.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(base: u64, stream: u64) -> ChaCha8Rng {
    rng_from(mix(base, stream))
}
