//! Receipt Merkle trees.
//!
//! Leaves are `SHA-256(event_id ‖ message_size as u64 big-endian)`, sorted
//! by event id. Inner nodes hash the concatenation of their two children.
//! An odd node at the end of a level is carried up unchanged.

use crate::hash::{sha256, Digest32};
use crate::room_state::EventId;

pub fn leaf_hash(event_id: &EventId, message_size: u64) -> Digest32 {
    sha256(&[event_id, &message_size.to_be_bytes()])
}

/// Root over `(event_id, message_size)` pairs in any order. `None` for an
/// empty set.
pub fn merkle_root(leaves: &[(EventId, u64)]) -> Option<Digest32> {
    let mut sorted = leaves.to_vec();
    sorted.sort_unstable_by_key(|a| a.0);
    let mut level: Vec<Digest32> = sorted.iter().map(|(id, size)| leaf_hash(id, *size)).collect();
    if level.is_empty() {
        return None;
    }
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| match pair {
                [l, r] => sha256(&[l, r]),
                [odd] => *odd,
                _ => unreachable!(),
            })
            .collect();
    }
    Some(level[0])
}
