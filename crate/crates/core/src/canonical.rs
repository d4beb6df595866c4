//! Canonical JSON encoding and content digests.
//!
//! Canonical bytes are compact UTF-8 JSON with object keys sorted
//! lexicographically (by byte) at every depth. Floats are written as the
//! shortest decimal that parses back to the same `f64`; integers stay
//! integers. Every persisted artifact and every digest goes through here.

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Encode `value` canonically.
///
/// Going through `serde_json::Value` sorts keys, since its map type is
/// ordered when the `preserve_order` feature is off.
pub fn to_canonical_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, serde_json::Error> {
    let v = serde_json::to_value(value)?;
    serde_json::to_vec(&v)
}

/// Canonical re-encoding of arbitrary JSON text.
pub fn canonicalize_json(bytes: &[u8]) -> Result<Vec<u8>, serde_json::Error> {
    let v: serde_json::Value = serde_json::from_slice(bytes)?;
    serde_json::to_vec(&v)
}

pub fn from_json_bytes<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, serde_json::Error> {
    serde_json::from_slice(bytes)
}

/// Lowercase hex SHA-256 of `bytes` (64 chars).
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
