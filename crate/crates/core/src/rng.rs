//! Counter-keyed random streams.
//!
//! Every random draw in training and sampling comes from a stream keyed by
//! the run seed plus a small tuple (purpose, epoch, item, ...), so results
//! do not depend on iteration order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, key: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix(seed);
    for &k in key {
        h = splitmix(h ^ splitmix(k.wrapping_add(0x5851_F42D_4C95_7F2D)));
    }
    let mut bytes = [0u8; 32];
    let mut s = h;
    for chunk in bytes.chunks_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// A 64-bit seed derived from `seed` and `key`, for APIs that take a plain
/// seed.
pub fn derive(seed: u64, key: &[u64]) -> u64 {
    use rand::Rng;
    stream(seed, key).random()
}
