//! Seed derivation and random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere in the crate.
pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable per-trial seed. Independent of evaluation order, so parallel and
/// sequential runs draw the same streams.
pub fn trial_seed(base_seed: u64, trial_index: u64) -> u64 {
    mix64(base_seed ^ mix64(trial_index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}
