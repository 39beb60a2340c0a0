//! Named, reproducible RNG streams.
//!
//! All randomness flows from one root seed through named sub-streams
//! (`scene/SBS1`, `noise/SBS2`, `init`, `shuffle/round-3`, ...). Two runs
//! with the same root seed and stream names draw identical sequences, and
//! streams are independent of the order in which sibling streams are used.

use rand_chacha::rand_core::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Derives child seeds from a root seed and a stream name (FNV-1a mix).
#[derive(Debug, Clone, Copy)]
pub struct SeedStream {
    root: u64,
}

impl SeedStream {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// A deterministic RNG for the named sub-stream.
    pub fn stream(&self, name: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.child_seed(name))
    }

    /// The derived 64-bit seed for a named sub-stream.
    pub fn child_seed(&self, name: &str) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in self.root.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        for b in name.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        // splitmix64 finalizer to decorrelate nearby names
        h = h.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }
}
