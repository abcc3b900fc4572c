//! Proof-of-relay settlement.
//!
//! One relay segment settles in five steps:
//!
//! 1. the outbound node signs `(event_id, message_size)` ([`assemble_outbound`]);
//! 2. the relay checks the room member list and endorses ([`relay_endorse`]);
//! 3. the inbound node verifies both signatures and the hop chain, batches
//!    the leaf and eventually signs a Merkle-rooted receipt
//!    ([`inbound_accept`], [`build_receipt`]);
//! 4. the relay compiles receipts into a bill and the outbound node endorses
//!    it after matching the root against its own send log
//!    ([`compile_bill`], [`outbound_endorse`]);
//! 5. the relay commits its epoch of endorsements into a KZG vector and
//!    answers a sampled subvector challenge ([`WorkloadEpoch`],
//!    [`verify_workload`]).

mod envelope;
mod merkle;
mod settlement;
mod workload;

use thiserror::Error;

use crate::kzg::KzgError;

pub use envelope::{
    assemble_outbound, inbound_accept, relay_endorse, BatchKey, ChainLink, Endorsement, InboundBatch,
    Leaf, Membership, PublicBytes, RelayEnvelope, SignatureBytes,
};
pub(crate) use envelope::chain_digest;
pub use merkle::{leaf_hash, merkle_root};
pub use settlement::{
    build_receipt, compile_bill, due_receipts, outbound_endorse, BillLine, OutboundLedger, ReceiptPolicy,
    RelayBill, RelayLedger, RelayReceipt, RelayRecord, COEFFICIENT_SCALE,
};
pub use workload::{
    epoch_params, sample_indices, sample_seed, slot_digest, verify_workload, WorkloadEpoch, WorkloadProof,
    DEFAULT_EPOCH_CAPACITY, SAMPLE_SIZE,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PorError {
    #[error("node is not in the room member list")]
    NotAMember,
    #[error("declared message size does not match the payload")]
    SizeMismatch,
    #[error("empty payload")]
    EmptyPayload,
    #[error("outbound signature does not verify")]
    BadOutboundSignature,
    #[error("relay signature does not verify")]
    BadRelaySignature,
    #[error("envelope carries no relay signature")]
    MissingRelaySignature,
    #[error("hop chain breaks at hop {hop}")]
    BadChain { hop: usize },
    #[error("envelope is addressed to another node")]
    WrongNextHop,
    #[error("replay: {0}")]
    Replay(String),
    #[error("receipt signature does not verify")]
    BadInboundSignature,
    #[error("{missing} relayed events are not covered by receipts")]
    MissingEvents { missing: usize },
    #[error("Merkle root does not match")]
    RootMismatch,
    #[error("receipt names another outbound node or relay")]
    ReceiptMismatch,
    #[error("no receipts to bill")]
    NoReceipts,
    #[error("bill lacks the outbound endorsement")]
    MissingEndorsement,
    #[error("workload epoch is full ({capacity} slots)")]
    EpochFull { capacity: usize },
    #[error("workload epoch is empty")]
    EmptyEpoch,
    #[error("envelope was endorsed by another relay")]
    ForeignEnvelope,
    #[error("workload proof rejected: {0}")]
    BadWorkloadProof(&'static str),
    #[error(transparent)]
    Kzg(#[from] KzgError),
}
