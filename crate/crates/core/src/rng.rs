//! Seed derivation. Every stochastic stage gets its own ChaCha stream derived
//! from a root seed plus a stage-specific salt. Outputs do not depend on
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finaliser.
pub const fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a salt.
pub const fn derive_seed(parent: u64, salt: u64) -> u64 {
    mix64(mix64(parent) ^ salt.rotate_left(17))
}

/// Hashes a short ASCII tag into a salt (FNV-1a).
pub const fn tag(label: &str) -> u64 {
    let bytes = label.as_bytes();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut i = 0;
    while i < bytes.len() {
        h ^= bytes[i] as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
        i += 1;
    }
    h
}

pub fn stream(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

pub fn tagged_stream(seed: u64, label: &str) -> StreamRng {
    stream(derive_seed(seed, tag(label)))
}
