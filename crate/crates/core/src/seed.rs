//! Seed derivation. Every random stream is derived from a root seed and a
//! label by hashing, so streams for different purposes never alias.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The generator used everywhere. ChaCha keeps streams stable across
/// platforms and `rand` releases.
pub type BenchRng = ChaCha8Rng;

/// Derives a child seed from `root`, a purpose label, and an integer id.
pub fn derive_seed(root: u64, label: &str, id: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(id.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_from_seed(seed: u64) -> BenchRng {
    BenchRng::seed_from_u64(seed)
}

pub fn derived_rng(root: u64, label: &str, id: u64) -> BenchRng {
    rng_from_seed(derive_seed(root, label, id))
}

/// Independent generator for one step of a trial: same key, separate
/// ChaCha stream per step, so replaying a prefix needs no stream bookkeeping.
pub fn step_rng(seed: u64, step: u64) -> BenchRng {
    let mut rng = rng_from_seed(seed);
    rng.set_stream(step);
    rng
}

/// Short hex digest of arbitrary bytes, used as a fingerprint in artifacts.
pub fn fingerprint(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..8])
}
