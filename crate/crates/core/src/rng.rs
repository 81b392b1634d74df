//! Seed derivation.
//!
//! Every random stream in a run is a ChaCha8 generator seeded from the run
//! seed and a path of integer labels, mixed with SplitMix64. Streams therefore
//! depend only on *what* they are for, never on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream labels. Kept stable: changing a value changes every run.
pub mod stream {
    pub const TRAJECTORY: u64 = 1;
    pub const SCHEDULE: u64 = 2;
    pub const PREPROCESS: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const VAL_SUBSAMPLE: u64 = 6;
    pub const SYNTHETIC: u64 = 7;
}

/// Human-readable description of [`derive_seed`], written into resolved configs.
pub const DERIVATION_RULE: &str = "chacha8(splitmix64 fold of [seed, label, indices...]); \
trajectory=[seed,1,T,n] schedule=[seed,2,T] preprocess=[seed,3,T,i,slot] init=[seed,4] \
split=[seed,5] val_subsample=[seed,6] synthetic=[seed,7]";

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream_rng(seed: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, path))
}
