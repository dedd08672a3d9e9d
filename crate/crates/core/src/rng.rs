//! Deterministic random streams.
//!
//! Every random quantity is drawn from a ChaCha8 generator (`rand_chacha`).
//! Independent substreams are obtained by mixing a base seed with integer
//! tags through the SplitMix64 finalizer, so any chain, bootstrap resample
//! or simulation replicate can be reproduced in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Name recorded in draw-file headers.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha), substreams keyed by SplitMix64(seed, tags...)";

/// Seed used by the CLI when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 20_211_001;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a sequence of tags.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Stable 64-bit tag for a string label (FNV-1a).
pub fn label_tag(label: &str) -> u64 {
    label
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325_u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}
