//! Deterministic seed derivation.
//!
//! Every random stream in the crate is keyed by a tuple of integers mixed
//! through SplitMix64, so results do not depend on scheduling or on the order
//! in which independent streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
pub fn mix(seed: u64, key: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ key)
}

/// Seed of the sub-stream identified by `keys` under `seed`.
pub fn derive(seed: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ k))
}

/// Rng for the stream identified by `keys` under `seed`.
pub fn stream(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, keys))
}
