//! Splittable seeded random streams.
//!
//! Every random quantity is drawn from a ChaCha8 generator whose seed is a
//! pure function of the root seed and a path of `(tag, index)` pairs, so a
//! replicate's draws never depend on scheduling or on other replicates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A node in the seed tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream {
    key: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { key: mix(seed ^ 0x6a09_e667_f3bc_c908) }
    }

    /// Child node for `(tag, index)`; distinct tags give unrelated subtrees.
    pub fn child(&self, tag: &str, index: u64) -> Self {
        let h = mix(self.key ^ fnv1a(tag));
        Self {
            key: mix(h.wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15))),
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.key)
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}
