//! End-to-end room encryption.
//!
//! Small rooms use pairwise ratcheted sessions: every ordered member pair
//! holds a session and a message is sealed once per recipient. Once a room
//! grows past the group threshold, a single shared *group key* (key A) is
//! created by whoever sends first after a reset and handed to every other
//! member over pairwise sessions, so rekeying costs `N − 1` messages
//! instead of `N·(N − 1)`.
//!
//! All ciphertexts are AES-256-GCM. Every [`CipherEnvelope`] is signed by
//! the sender's device key, and the signature is checked before any
//! decryption is attempted.

mod envelope;
mod room;
mod session;

pub use envelope::{CipherEnvelope, EnvelopeMode, RoomId};
pub use room::{
    ExchangeCounters, ExchangeKind, KeyExchange, MemberId, MemberState, ResetNotice, RoomCrypto,
    RoomMode, DEFAULT_GROUP_THRESHOLD,
};
pub use session::{
    establish_session, group_decrypt, group_encrypt, ratchet_decrypt, ratchet_encrypt, GroupKey,
    KeyId, Keychain, PairwiseSession, MAX_SKIP,
};

use aes_gcm::aead::{Aead, Payload};
use aes_gcm::{Aes256Gcm, Key, KeyInit, Nonce};
use thiserror::Error;

use crate::codec::DecodeError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("peer public key is the identity element")]
    DegeneratePeerKey,
    #[error("ciphertext failed authentication")]
    Authentication,
    #[error("envelope signature does not verify under the sender's device key")]
    BadSignature,
    #[error("message index {index} skips {gap} keys, more than the cache allows")]
    SkipTooLarge { index: u64, gap: u64 },
    #[error("message key for index {0} was already used or erased")]
    StaleIndex(u64),
    #[error("no group key with id {0}")]
    UnknownKey(String),
    #[error("envelope is not addressed to this session")]
    WrongRecipient,
    #[error("envelope mode does not match the decryption path")]
    WrongMode,
    #[error("unknown member {0}")]
    UnknownMember(u32),
    #[error("sender is not a member of the room")]
    UnknownSender,
    #[error("no session between members {from} and {to}")]
    NoSession { from: u32, to: u32 },
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

pub(crate) fn seal(key: &[u8; 32], nonce: &[u8; 12], aad: &[u8], plaintext: &[u8]) -> Vec<u8> {
    Aes256Gcm::new(Key::<Aes256Gcm>::from_slice(key))
        .encrypt(
            Nonce::from_slice(nonce),
            Payload {
                msg: plaintext,
                aad,
            },
        )
        .expect("AES-GCM encryption of an in-memory buffer cannot fail")
}

pub(crate) fn open(
    key: &[u8; 32],
    nonce: &[u8; 12],
    aad: &[u8],
    ciphertext: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    Aes256Gcm::new(Key::<Aes256Gcm>::from_slice(key))
        .decrypt(
            Nonce::from_slice(nonce),
            Payload {
                msg: ciphertext,
                aad,
            },
        )
        .map_err(|_| CryptoError::Authentication)
}
