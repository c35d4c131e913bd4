//! Seed derivation. Every random stream in a run is derived from the single
//! root seed by hashing a path of integer tags, so streams are independent of
//! the order in which work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `tags` into `root`. Distinct tag paths give unrelated seeds.
pub fn derive(root: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(root), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(root: u64, tags: &[u64]) -> Rng {
    rng(derive(root, tags))
}

/// Stage tags used with [`derive`].
pub mod stage {
    pub const LIBRARY: u64 = 1;
    pub const COLLECT: u64 = 2;
    pub const TOPUP: u64 = 3;
    pub const EXTRA_TUPLES: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const TABULAR: u64 = 6;
    pub const DQN: u64 = 7;
    pub const COMPARE: u64 = 8;
    pub const CLASSIFIER_DATA: u64 = 9;
    pub const CLASSIFIER_TRAIN: u64 = 10;
}
