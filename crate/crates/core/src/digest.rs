//! Content digests and seed derivation.

use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Derives a per-stage seed from the run seed: `seed + H(stage)`, where `H`
/// is the first eight bytes of SHA-256 over the stage name, read little-endian.
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let hash = Sha256::digest(stage.as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&hash[..8]);
    seed.wrapping_add(u64::from_le_bytes(head))
}
