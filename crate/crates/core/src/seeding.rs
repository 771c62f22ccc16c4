//! Deterministic seed derivation.
//!
//! Every random draw in the crate comes from a ChaCha stream whose seed is
//! mixed from a root seed plus structural tags (epoch, sample id, purpose).
//! Derivation by value rather than by draw order keeps serial and parallel
//! execution byte-identical.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; the standard 64-bit mixer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a root seed with a sequence of tag words into a derived seed.
pub fn mix(root: u64, tags: &[u64]) -> u64 {
    let mut acc = splitmix64(root);
    for &t in tags {
        acc = splitmix64(acc ^ splitmix64(t));
    }
    acc
}

/// A ChaCha stream for the derived seed.
pub fn stream(root: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(root, tags))
}

/// Purpose tags separating the independent random streams of a run.
pub mod purpose {
    /// Training-time augmentation draws.
    pub const TRAIN_AUG: u64 = 0x01;
    /// End-of-epoch inference-pass augmentation draws.
    pub const INFER_AUG: u64 = 0x02;
    /// Per-epoch batch shuffling.
    pub const SHUFFLE: u64 = 0x03;
    /// Dataset generation.
    pub const DATA: u64 = 0x04;
    /// Label-noise injection.
    pub const NOISE: u64 = 0x05;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_is_stable_and_tag_sensitive() {
        assert_eq!(mix(7, &[1, 2]), mix(7, &[1, 2]));
        assert_ne!(mix(7, &[1, 2]), mix(7, &[2, 1]));
        assert_ne!(mix(7, &[1]), mix(8, &[1]));
    }
}
