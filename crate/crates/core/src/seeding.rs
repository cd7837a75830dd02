//! Deterministic seed derivation.
//!
//! Every randomized routine takes a 64-bit seed and derives per-purpose
//! sub-seeds through `derive_seed`, so adding draws in one stream never
//! perturbs another and parallel/serial execution orders agree.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a sub-seed from a master seed, a purpose tag, and an index.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut h = splitmix64(master ^ 0x6a09_e667_f3bc_c909);
    for &b in tag.as_bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ index)
}

/// The crate-standard RNG, seeded directly.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// RNG for a derived stream.
pub fn stream_rng(master: u64, tag: &str, index: u64) -> ChaCha8Rng {
    rng_from_seed(derive_seed(master, tag, index))
}
