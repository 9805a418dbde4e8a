//! Seeded random streams. Every stochastic component derives its generator
//! from `(seed, stream)` so results never depend on call order elsewhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RunRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> RunRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, stream: u64) -> RunRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream identifiers, kept distinct so components never share draws.
pub mod streams {
    pub const BLOBS: u64 = 1;
    pub const ANNOTATE: u64 = 2;
    pub const PRETRAIN_INIT: u64 = 3;
    pub const PRETRAIN_SPLIT: u64 = 4;
    pub const PRETRAIN_EPOCH: u64 = 5;
    pub const LECOMH_INIT: u64 = 6;
    pub const LECOMH_EPOCH: u64 = 7;
    pub const BASELINE: u64 = 8;
    pub const IDN_PROJECTION: u64 = 9;
}
