//! Seed derivation. Every source of randomness in a run is a ChaCha8 stream
//! derived from the master seed and a purpose label, so enabling or
//! disabling one consumer never shifts another's stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Stream for `(seed, purpose)`.
pub fn derive(seed: u64, purpose: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ fnv1a64(purpose.as_bytes())))
}

/// Stream for `(seed, purpose, index)`; used for per-epoch and per-image
/// streams so work units stay independent.
pub fn derive_indexed(seed: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(
        splitmix64(seed ^ fnv1a64(purpose.as_bytes())) ^ index,
    ))
}
