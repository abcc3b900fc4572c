use std::collections::BTreeMap;

use crate::hash::{sha256, Digest32};
use crate::identity::KeyPair;
use crate::pairing::{GroupElement, GROUP_BYTES};

use super::envelope::{CipherEnvelope, EnvelopeMode, RoomId};
use super::{open, CryptoError};

/// Largest number of message keys a receiving chain will hold for
/// out-of-order delivery.
pub const MAX_SKIP: u64 = 1000;

pub type KeyId = [u8; 16];

/// Symmetric hash ratchet.
///
/// `chain_key(i+1) = H("chain" ‖ chain_key(i))` and the message key for
/// index `i` is `H("msg" ‖ chain_key(i))`. Stepping overwrites the chain
/// key, so earlier message keys cannot be recomputed from the current
/// state.
#[derive(Clone, PartialEq, Eq)]
pub struct Keychain {
    chain_key: Digest32,
    index: u64,
}

impl Keychain {
    pub fn new(seed: Digest32) -> Self {
        Keychain {
            chain_key: seed,
            index: 0,
        }
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn chain_key(&self) -> &Digest32 {
        &self.chain_key
    }

    pub fn message_key(&self) -> Digest32 {
        sha256(&[b"msg", &self.chain_key])
    }

    /// Returns `(index, message key)` for the current position and advances.
    pub fn step(&mut self) -> (u64, Digest32) {
        let out = (self.index, self.message_key());
        self.chain_key = sha256(&[b"chain", &self.chain_key]);
        self.index += 1;
        out
    }
}

impl std::fmt::Debug for Keychain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Keychain")
            .field("index", &self.index)
            .finish_non_exhaustive()
    }
}

/// One direction-aware view of a pairwise session.
#[derive(Clone, Debug)]
pub struct PairwiseSession {
    local: [u8; GROUP_BYTES],
    peer: [u8; GROUP_BYTES],
    root_key: Digest32,
    send_chain: Keychain,
    recv_chain: Keychain,
    skipped: BTreeMap<u64, Digest32>,
}

impl PairwiseSession {
    /// Builds a session from an already computed DH output. Both sides call
    /// this with the same `shared` and swapped public keys.
    pub(crate) fn from_shared(
        shared: &[u8; GROUP_BYTES],
        local: [u8; GROUP_BYTES],
        peer: [u8; GROUP_BYTES],
    ) -> Self {
        let root_key = sha256(&[b"root", shared]);
        let chain = |from: &[u8], to: &[u8]| {
            Keychain::new(sha256(&[b"chain-init", &root_key, from, to]))
        };
        PairwiseSession {
            send_chain: chain(&local, &peer),
            recv_chain: chain(&peer, &local),
            local,
            peer,
            root_key,
            skipped: BTreeMap::new(),
        }
    }

    pub fn root_key(&self) -> &Digest32 {
        &self.root_key
    }

    pub fn local_public(&self) -> &[u8; GROUP_BYTES] {
        &self.local
    }

    pub fn peer_public(&self) -> &[u8; GROUP_BYTES] {
        &self.peer
    }

    pub fn send_chain(&self) -> &Keychain {
        &self.send_chain
    }

    pub fn recv_chain(&self) -> &Keychain {
        &self.recv_chain
    }

    pub fn skipped_len(&self) -> usize {
        self.skipped.len()
    }

    pub(crate) fn wrap_key(&self) -> Digest32 {
        sha256(&[b"wrap", &self.root_key])
    }
}

/// `root_key = H("root" ‖ a.secret · b_public)`. Chains start at index 0
/// and are labelled by direction, so `a`'s send chain is `b`'s receive
/// chain.
pub fn establish_session(
    a: &KeyPair,
    b_public: &GroupElement,
) -> Result<PairwiseSession, CryptoError> {
    if b_public.is_identity() {
        return Err(CryptoError::DegeneratePeerKey);
    }
    let shared = *b_public * a.secret();
    Ok(PairwiseSession::from_shared(
        &shared.to_bytes(),
        a.public().to_bytes(),
        b_public.to_bytes(),
    ))
}

pub(crate) fn derive_nonce(key_ref: &[u8], sender: &[u8], index: u64) -> [u8; 12] {
    let d = sha256(&[b"nonce", key_ref, sender, &index.to_be_bytes()]);
    d[..12].try_into().unwrap()
}

/// Seals `plaintext` with the next send-chain key and signs the envelope.
pub fn ratchet_encrypt(
    session: &mut PairwiseSession,
    signer: &KeyPair,
    room_id: RoomId,
    plaintext: &[u8],
) -> CipherEnvelope {
    let (index, key) = session.send_chain.step();
    let sender = signer.public().to_bytes();
    let nonce = derive_nonce(&session.peer, &sender, index);
    CipherEnvelope::seal_and_sign(
        signer,
        room_id,
        EnvelopeMode::Pairwise {
            peer: session.peer,
            index,
        },
        nonce,
        &key,
        plaintext,
    )
}

/// Checks the signature, then decrypts with the receive chain.
///
/// Indices ahead of the chain are reached by stepping forward and caching
/// the skipped keys; indices behind it are served from the cache once and
/// then erased. State is only updated when authentication succeeds.
pub fn ratchet_decrypt(
    session: &mut PairwiseSession,
    envelope: &CipherEnvelope,
    sender: &GroupElement,
) -> Result<Vec<u8>, CryptoError> {
    if !envelope.verify_signature(sender) {
        return Err(CryptoError::BadSignature);
    }
    let EnvelopeMode::Pairwise { peer, index } = envelope.mode else {
        return Err(CryptoError::WrongMode);
    };
    if peer != session.local {
        return Err(CryptoError::WrongRecipient);
    }
    let aad = envelope.aad();
    if index < session.recv_chain.index() {
        let key = session
            .skipped
            .get(&index)
            .ok_or(CryptoError::StaleIndex(index))?;
        let plaintext = open(key, &envelope.nonce, &aad, &envelope.ciphertext)?;
        session.skipped.remove(&index);
        return Ok(plaintext);
    }
    let gap = index - session.recv_chain.index();
    if gap > MAX_SKIP || session.skipped.len() as u64 + gap > MAX_SKIP {
        return Err(CryptoError::SkipTooLarge { index, gap });
    }
    let mut chain = session.recv_chain.clone();
    let mut skipped = Vec::with_capacity(gap as usize);
    while chain.index() < index {
        skipped.push(chain.step());
    }
    let (_, key) = chain.step();
    let plaintext = open(&key, &envelope.nonce, &aad, &envelope.ciphertext)?;
    session.recv_chain = chain;
    session.skipped.extend(skipped);
    Ok(plaintext)
}

/// The shared room key. `key_id` travels in the clear so receivers can
/// pick the right key.
#[derive(Clone, PartialEq, Eq)]
pub struct GroupKey {
    pub key_id: KeyId,
    pub key: Digest32,
    pub epoch: u64,
}

impl std::fmt::Debug for GroupKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GroupKey")
            .field("key_id", &hex::encode(self.key_id))
            .field("epoch", &self.epoch)
            .finish_non_exhaustive()
    }
}

pub fn group_encrypt(
    key: &GroupKey,
    signer: &KeyPair,
    room_id: RoomId,
    index: u64,
    plaintext: &[u8],
) -> CipherEnvelope {
    let sender = signer.public().to_bytes();
    let nonce = derive_nonce(&key.key_id, &sender, index);
    CipherEnvelope::seal_and_sign(
        signer,
        room_id,
        EnvelopeMode::Group {
            key_id: key.key_id,
            index,
        },
        nonce,
        &key.key,
        plaintext,
    )
}

/// Checks the signature, then decrypts with whichever key `lookup` returns
/// for the envelope's key id.
pub fn group_decrypt<'a>(
    lookup: impl Fn(&KeyId) -> Option<&'a GroupKey>,
    envelope: &CipherEnvelope,
    sender: &GroupElement,
) -> Result<Vec<u8>, CryptoError> {
    if !envelope.verify_signature(sender) {
        return Err(CryptoError::BadSignature);
    }
    let EnvelopeMode::Group { key_id, .. } = envelope.mode else {
        return Err(CryptoError::WrongMode);
    };
    let key = lookup(&key_id).ok_or_else(|| CryptoError::UnknownKey(hex::encode(key_id)))?;
    open(&key.key, &envelope.nonce, &envelope.aad(), &envelope.ciphertext)
}
