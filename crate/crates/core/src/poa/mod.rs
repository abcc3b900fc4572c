//! Proof-of-availability consensus.
//!
//! Validators are drawn with probability proportional to
//! `stake × availability`, where availability is the share of recent epochs
//! in which the node had a proof-of-relay submission accepted. The selected
//! validator assesses pending submissions, credits relays in a Verkle
//! account tree and signs the block; followers redo every step.

mod chain;
mod stake;
mod verkle;

use thiserror::Error;

use crate::identity::Address;
use crate::por::PorError;

pub use chain::{account_key, collect_reveals, Block, ChainState, CreditLedger, Refused, Submission};
pub use stake::{select_validator, RandaoState, StakeEntry, StakeRegistry, AVAILABILITY_WINDOW};
pub use verkle::{
    leaf_digest, nibble, verkle_params, verkle_verify, verkle_verify_absent, Account, PathLevel, PathProof,
    VerkleKey, VerkleTree, ARITY,
};

/// Why a proof-of-relay submission was refused.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Rejection {
    #[error("workload proof: {0}")]
    Workload(PorError),
    #[error("bill signature: {0}")]
    Signature(PorError),
    #[error("bill root: {0}")]
    Root(PorError),
    #[error("bill and workload proof name different relays")]
    RelayMismatch,
    #[error("sampled slot is not in the bill")]
    Unbilled,
    #[error("double credit: {0}")]
    DoubleCredit(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PoaError {
    #[error("no registered node has positive weight")]
    NoWeight,
    #[error("node {0} is not registered")]
    UnknownNode(Address),
    #[error("RANDAO reveal from {0} does not verify")]
    BadReveal(Address),
    #[error("block from {got}, but {expected} was selected")]
    NotSelected { expected: Address, got: Address },
    #[error("block does not extend the current tip")]
    WrongParent,
    #[error("block signature does not verify")]
    BadBlockSignature,
    #[error("block includes refused submission {index}: {reason}")]
    Rejected { index: usize, reason: Rejection },
    #[error("state root does not match")]
    StateRootMismatch,
}
