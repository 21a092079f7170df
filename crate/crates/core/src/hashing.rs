//! Content hashes for configs, checkpoints, and reports.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of raw bytes.
pub fn bytes_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hex SHA-256 of the compact JSON encoding of `value`.
pub fn json_hash<T: Serialize>(value: &T) -> String {
    bytes_hash(&serde_json::to_vec(value).expect("value serializes"))
}

/// Hex SHA-256 over the little-endian bytes of a float slice.
pub fn f64_hash(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}
