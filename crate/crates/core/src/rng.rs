//! Seeded, splittable random streams.
//!
//! Every stochastic routine takes a [`SeedStream`]; independent substreams are
//! derived by index so that parallel replicates stay bit-reproducible no matter
//! how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// A named position in the tree of random streams rooted at a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream {
    key: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream { key: mix(seed) }
    }

    /// Child stream number `index`. Children of distinct indices are independent.
    pub fn substream(&self, index: u64) -> SeedStream {
        SeedStream {
            key: mix(self.key ^ mix(index.wrapping_add(0x9E37_79B9_7F4A_7C15))),
        }
    }

    pub fn rng(&self) -> StreamRng {
        StreamRng::seed_from_u64(self.key)
    }
}

impl From<u64> for SeedStream {
    fn from(seed: u64) -> Self {
        SeedStream::new(seed)
    }
}

// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
