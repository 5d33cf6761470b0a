//! Named sub-streams derived from one master seed.
//!
//! Every random draw in the workbench flows through a `(master, tag, index)`
//! triple so that datasets, weight inits, dropout masks, and batch orders are
//! independently reproducible and schedule-independent.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a child seed from `(master, tag, index)`.
pub fn substream(master: u64, tag: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(tag.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// A deterministic RNG for the given sub-stream.
pub fn rng_for(master: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream(master, tag, index))
}
