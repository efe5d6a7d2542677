//! Deterministic seed derivation.
//!
//! Every random decision in this crate flows from a ChaCha8 stream keyed by a
//! 64-bit seed. Batches derive one sub-seed per world, instance, and planner
//! run with a SplitMix64 chain over `(master, domain tag, indices...)`, so the
//! same master seed always reproduces the same experiment, run by run, and
//! individual runs can be replayed in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_WORLD: u64 = 1;
pub const TAG_INSTANCE: u64 = 2;
pub const TAG_RUN: u64 = 3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a master seed and a sequence of parts into a sub-seed.
pub fn derive(master: u64, parts: &[u64]) -> u64 {
    let mut s = splitmix64(master);
    for &p in parts {
        s = splitmix64(s ^ splitmix64(p));
    }
    s
}

/// The crate-wide generator: ChaCha8 keyed from a 64-bit seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
