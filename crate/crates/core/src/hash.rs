//! SHA-256 helpers shared by every module.

use sha2::{Digest as _, Sha256};

use crate::pairing::Scalar;

/// A 32-byte SHA-256 output.
pub type Digest32 = [u8; 32];

/// Hashes the concatenation of `parts`.
pub fn sha256(parts: &[&[u8]]) -> Digest32 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    hasher.finalize().into()
}

/// Hashes `parts` and reduces the 256-bit digest modulo the group order.
pub fn hash_to_scalar(parts: &[&[u8]]) -> Scalar {
    Scalar::from_be_bytes_mod_order(&sha256(parts))
}

/// Wide reduction: two domain-separated digests give 512 bits, so the
/// result is statistically close to uniform. Used for signing nonces.
pub(crate) fn hash_to_scalar_wide(parts: &[&[u8]]) -> Scalar {
    let mut wide = Vec::with_capacity(64);
    for lane in [0u8, 1u8] {
        let mut hasher = Sha256::new();
        hasher.update([lane]);
        for part in parts {
            hasher.update(part);
        }
        wide.extend_from_slice(&hasher.finalize());
    }
    Scalar::from_be_bytes_mod_order(&wide)
}
