//! Counter-based hashing for reproducible per-item random draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn hash_words(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x2545_F491_4F6C_DD1D, |acc, w| splitmix64(acc ^ splitmix64(*w)))
}

/// Uniform value in [0, 1) derived from `words`.
pub fn unit_hash(words: &[u64]) -> f64 {
    (hash_words(words) >> 11) as f64 / (1u64 << 53) as f64
}

/// Independent stream for a named purpose within one seeded run.
pub fn stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(hash_words(&[seed, purpose]))
}
