//! Seeded random streams.
//!
//! Every source of randomness in the pipeline derives from one run seed
//! through a named sub-stream (`split`, `init`, `shuffle`, `sampling`, ...),
//! so each component can be reproduced in isolation.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a, used to map stream names to ChaCha stream ids. Stable across
/// platforms and Rust versions, unlike `DefaultHasher`.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// An RNG for the sub-stream `name` of the given run seed. `salt`
/// distinguishes repeated uses of one stream (epoch index, user index).
pub fn sub_rng(seed: u64, name: &str, salt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a64(name.as_bytes()) ^ salt.wrapping_mul(0x9e3779b97f4a7c15));
    rng
}
