//! Seed derivation and counter-based random streams.
//!
//! All randomness descends from one master seed. Stochastic per-item draws
//! (per strand, per read) use a ChaCha stream selected by a stable key, so
//! results do not depend on iteration order or thread scheduling.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stable 64-bit hash of a byte string.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Derives an independent sub-seed for a named stage.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write_u64(master);
    h.write(label.as_bytes());
    h.finish()
}

/// Generator for keyed streams under one seed.
#[derive(Clone)]
pub struct KeyedStreams {
    base: ChaCha8Rng,
}

impl KeyedStreams {
    pub fn new(seed: u64) -> Self {
        KeyedStreams { base: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// The stream for `key`; identical keys always yield identical streams.
    pub fn stream(&self, key: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(key);
        rng.set_word_pos(0);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_keyed_and_reproducible() {
        let s = KeyedStreams::new(42);
        let a: Vec<u64> = s.stream(7).random_iter().take(4).collect();
        let b: Vec<u64> = KeyedStreams::new(42).stream(7).random_iter().take(4).collect();
        let c: Vec<u64> = s.stream(8).random_iter().take(4).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn derived_seeds_differ_by_label() {
        assert_ne!(derive_seed(1, "design"), derive_seed(1, "library"));
        assert_eq!(derive_seed(1, "design"), derive_seed(1, "design"));
    }
}
