//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream addressed by
//! `(seed, stage, index)`, so work items can run in any order (or in
//! parallel) without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stage tags for [`stream`]; values are arbitrary but fixed.
pub mod stage {
    pub const SYNTH: u64 = 1;
    pub const VIEWS: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const FOLDS: u64 = 4;
    pub const SEARCH: u64 = 5;
    pub const FOREST: u64 = 6;
    pub const ADVERSARIAL: u64 = 7;
    pub const MC_SKEW: u64 = 8;
    pub const JITTER: u64 = 9;
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, stage: u64, index: u64) -> Rng {
    let key = mix(mix(seed) ^ stage.wrapping_mul(0x2545_f491_4f6c_dd1d));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// A child seed, for handing to components that take a plain `u64`.
pub fn derive_seed(seed: u64, stage: u64, index: u64) -> u64 {
    mix(mix(seed ^ mix(stage)) ^ index)
}
