//! Named seed derivation.
//!
//! Every stage draws its randomness from a child seed derived from the single
//! pipeline seed and a stage name, so stages stay reproducible on their own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `name` under `seed`.
pub fn derive(seed: u64, name: &str) -> u64 {
    // FNV-1a over the name, then mixed with the parent seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(splitmix64(seed) ^ h)
}

/// Child seed for an indexed sub-task, e.g. the classifier of atom `index`.
pub fn derive_indexed(seed: u64, name: &str, index: usize) -> u64 {
    splitmix64(derive(seed, name) ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
