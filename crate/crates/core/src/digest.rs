use alloc::string::String;
use sha2::{Digest, Sha256};

/// SHA-256 over the concatenation of `parts`, separated by a NUL byte.
pub(crate) fn sha256_parts(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            h.update([0u8]);
        }
        h.update(p);
    }
    h.finalize().into()
}

pub(crate) fn short_hex(parts: &[&[u8]], bytes: usize) -> String {
    let d = sha256_parts(parts);
    hex::encode(&d[..bytes.min(32)])
}

pub(crate) fn hash64(parts: &[&[u8]]) -> u64 {
    let d = sha256_parts(parts);
    u64::from_be_bytes([d[0], d[1], d[2], d[3], d[4], d[5], d[6], d[7]])
}
