//! Seed derivation.
//!
//! Seeds are `SHA-256(tag ‖ master_le ‖ key ‖ 0xff ‖ index_le)` used directly
//! as the 32-byte seed of a ChaCha8 generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive_seed(tag: &str, master: u64, key: &str, index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(tag.as_bytes());
    h.update(master.to_le_bytes());
    h.update(key.as_bytes());
    h.update([0xff]);
    h.update(index.to_le_bytes());
    h.finalize().into()
}

/// Generator for replication `rep` of the condition identified by `key`.
pub fn replication_rng(master: u64, key: &str, rep: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed("rep", master, key, rep))
}

/// Generator used to build the population identified by `key`.
pub fn population_rng(master: u64, key: &str) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed("pop", master, key, 0))
}
