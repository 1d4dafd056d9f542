//! Deterministic sub-seed derivation.
//!
//! Every random choice in an experiment (weight init, data partitioning,
//! batch order, dropout masks, exemplar sampling, synthetic generation)
//! flows from the master seed through a tagged SplitMix64 chain:
//!
//! ```text
//! seed = chain(master, [PURPOSE, index_0, index_1, ...])
//! ```
//!
//! The chain is order-sensitive, so `(client, round, epoch)` tuples map to
//! distinct streams. Streams are realized as ChaCha8 generators, which have
//! a stable cross-platform output for a given seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags; the first element of every derivation chain.
pub mod purpose {
    /// Network weight initialization.
    pub const INIT: u64 = 0x01;
    /// Experiment data partitioning (test / pretrain / per-round draws).
    pub const DATA: u64 = 0x02;
    /// Batch shuffling, indexed by (client, round, epoch).
    pub const SHUFFLE: u64 = 0x03;
    /// Dropout masks, indexed by (client, round, epoch, batch).
    pub const DROPOUT: u64 = 0x04;
    /// Exemplar sampling, indexed by (client, round).
    pub const EXEMPLAR: u64 = 0x05;
    /// Synthetic dataset generation.
    pub const SYNTHETIC: u64 = 0x06;
    /// PCA power-iteration start vectors.
    pub const PCA: u64 = 0x07;
    /// Centralized train/validation/test split.
    pub const CENTRAL: u64 = 0x08;
}

/// One SplitMix64 scramble step.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a sub-seed from the master seed and an ordered part list.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut s = splitmix64(master ^ 0xA076_1D64_78BD_642F);
    for &p in parts {
        s = splitmix64(s ^ splitmix64(p));
    }
    s
}

/// ChaCha8 stream for the given derivation chain.
pub fn rng_for(master: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, parts))
}
