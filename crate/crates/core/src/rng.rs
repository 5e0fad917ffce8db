//! Seed derivation.
//!
//! Every stochastic step draws from its own ChaCha stream whose seed is a pure
//! function of the run seed and a path of integers, so results do not depend
//! on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SearchRng = ChaCha8Rng;

pub const STREAM_CLUSTER: u64 = 1;
pub const STREAM_PROBES: u64 = 2;
pub const STREAM_INIT: u64 = 3;
pub const STREAM_PAIR: u64 = 4;
pub const STREAM_CHILD: u64 = 5;
pub const STREAM_GENERATION: u64 = 6;
pub const STREAM_DATASET: u64 = 7;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `path` into `seed`. Distinct paths give statistically independent seeds.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(seed: u64, path: &[u64]) -> SearchRng {
    SearchRng::seed_from_u64(derive_seed(seed, path))
}
