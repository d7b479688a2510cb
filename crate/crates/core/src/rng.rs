//! Seed management for reproducible experiments.
//!
//! One experiment seed fans out into independent named streams (arrivals,
//! placement, parameter init, ...). Streams are derived by hashing the
//! stream name into the root seed, so adding a new consumer never perturbs
//! the draws seen by existing ones and results stay bit-reproducible for a
//! given (config, seed) pair.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Derives per-stream RNGs from a single root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSplitter {
    root: u64,
}

impl SeedSplitter {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Seed for a named stream. FNV-1a digests the name, splitmix64 mixes
    /// it with the root so that nearby roots do not yield related streams.
    pub fn stream_seed(&self, name: &str) -> u64 {
        splitmix64(self.root ^ fnv1a(name.as_bytes()))
    }

    /// Fresh deterministic RNG for a named stream.
    pub fn stream(&self, name: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.stream_seed(name))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn same_name_same_stream() {
        let s = SeedSplitter::new(42);
        let mut a = s.stream("arrivals");
        let mut b = s.stream("arrivals");
        for _ in 0..16 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_names_diverge() {
        let s = SeedSplitter::new(42);
        let mut a = s.stream("arrivals");
        let mut b = s.stream("placement");
        let av: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let bv: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(av, bv, "distinct stream names must produce distinct draws");
    }

    #[test]
    fn different_roots_diverge() {
        let a = SeedSplitter::new(1).stream_seed("arrivals");
        let b = SeedSplitter::new(2).stream_seed("arrivals");
        assert_ne!(a, b);
    }

    #[test]
    fn stream_seed_is_stable_across_calls() {
        let s = SeedSplitter::new(7);
        assert_eq!(s.stream_seed("init"), s.stream_seed("init"));
    }

    #[test]
    fn stream_independent_of_other_streams_existing() {
        // Drawing from one stream must not affect another; streams are
        // seeded independently, so instantiation order is irrelevant.
        let s = SeedSplitter::new(99);
        let mut a1 = s.stream("a");
        let first_before: u64 = a1.next_u64();

        let s2 = SeedSplitter::new(99);
        let mut b = s2.stream("b");
        let _ = b.next_u64();
        let mut a2 = s2.stream("a");
        assert_eq!(first_before, a2.next_u64());
    }
}
