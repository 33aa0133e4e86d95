//! Deterministic seed derivation.
//!
//! Every random stream in the crate (per tree, per epoch, per noisy sample)
//! is keyed by mixing a base seed with stream identifiers, so results do not
//! depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(base: u64, stream: &[u64]) -> u64 {
    stream.iter().fold(mix(base), |acc, &s| mix(acc ^ mix(s)))
}

pub fn rng(base: u64, stream: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, stream))
}
