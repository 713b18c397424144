//! Seeded, stream-separated random number generation.
//!
//! Every random draw in the crate comes from a ChaCha stream keyed by a root seed and a
//! purpose-specific stream id, so results never depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Distinct tags never collide for indices below 2^40.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const GVAE: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const DROPOUT: u64 = 4;
    pub const EPOCH_GRAPH: u64 = 5;
    pub const MC: u64 = 6;
    pub const SYNTH: u64 = 7;
}

/// Deterministic generator for `(seed, tag, index)`.
pub fn stream_rng(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 40) ^ index);
    rng
}

/// Mixes several indices into one stream index (splitmix64 finalizer).
pub fn mix(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h & ((1 << 40) - 1)
}
