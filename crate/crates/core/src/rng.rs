//! Seeded, splittable random streams.
//!
//! Stream `r` of a seed depends only on `(seed, r)`, so any replication can be
//! regenerated in isolation and parallel runs match serial ones exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Reserved stream ids for non-replication consumers.
pub mod streams {
    pub const REFERENCE: u64 = u64::MAX;
    pub const RESERVOIR: u64 = u64::MAX - 1;
}

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives an independent seed for a sub-experiment (e.g. one table cell).
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
