//! Deterministic seed derivation.
//!
//! All randomness in the crate flows from ChaCha8 streams whose seeds are
//! derived with the SplitMix64 finalizer. Both algorithms are fixed,
//! documented and platform-stable, so equal seeds produce byte-identical
//! results everywhere.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Derive an independent child seed: SplitMix64 finalizer applied to
/// `base + (stream + 1) * GOLDEN_GAMMA`.
pub fn split_seed(base: u64, stream: u64) -> u64 {
    let mut z = base.wrapping_add(stream.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ChaCha8 generator for a derived stream.
pub fn stream_rng(base: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(split_seed(base, stream))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn split_is_deterministic_and_stream_sensitive() {
        assert_eq!(split_seed(7, 0), split_seed(7, 0));
        assert_ne!(split_seed(7, 0), split_seed(7, 1));
        assert_ne!(split_seed(7, 0), split_seed(8, 0));
    }

    #[test]
    fn known_value_pinned() {
        // Frozen so that an accidental algorithm change shows up in tests.
        assert_eq!(split_seed(0, 0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn rng_streams_reproduce() {
        let a: u64 = stream_rng(42, 3).gen();
        let b: u64 = stream_rng(42, 3).gen();
        assert_eq!(a, b);
    }
}
