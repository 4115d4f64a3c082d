//! Per-shot RNG derivation.
//!
//! Every shot gets its own ChaCha8 stream keyed by (master_seed, shot_index)
//! through a SplitMix64 step. Streams for distinct indices never collide
//! (the index map is injective mod 2^64) and a shot's randomness does not
//! depend on how many shots run before it or on which thread picks it up.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output mix. Bijective on u64.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for shot `index` under `master`. Matches the SplitMix64 sequence
/// started at `master`, advanced `index + 1` times.
pub fn shot_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GAMMA)))
}

pub fn shot_rng(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(shot_seed(master, index))
}
