use crate::codec::{DecodeError, Reader, Writer};
use crate::hash::{sha256, Digest32};
use crate::identity::{self, KeyPair, Signature};
use crate::pairing::{GroupElement, GROUP_BYTES};

use super::session::KeyId;

/// Rooms are named by the hash of their human-readable name.
pub type RoomId = Digest32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvelopeMode {
    /// Sealed with a pairwise chain key. `peer` is the recipient's current
    /// ratchet public key.
    Pairwise { peer: [u8; GROUP_BYTES], index: u64 },
    /// Sealed with the group key `key_id`; `index` is the sender's counter
    /// under that key.
    Group { key_id: KeyId, index: u64 },
}

/// Encoding:
///
/// ```text
/// frame(room_id) frame(sender)
/// u8 mode  (0: frame(peer) u64 index | 1: frame(key_id) u64 index)
/// frame(nonce) frame(ciphertext) frame(signature)
/// ```
///
/// The signature covers everything before it; the AEAD associated data
/// is everything before the ciphertext.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CipherEnvelope {
    pub room_id: RoomId,
    /// Sender's device public key.
    pub sender: [u8; GROUP_BYTES],
    pub mode: EnvelopeMode,
    pub nonce: [u8; 12],
    pub ciphertext: Vec<u8>,
    pub signature: [u8; identity::SIGNATURE_BYTES],
}

impl CipherEnvelope {
    pub(crate) fn header(
        room_id: &RoomId,
        sender: &[u8; GROUP_BYTES],
        mode: &EnvelopeMode,
        nonce: &[u8; 12],
    ) -> Vec<u8> {
        let mut w = Writer::new();
        w.frame(room_id).frame(sender);
        match mode {
            EnvelopeMode::Pairwise { peer, index } => {
                w.u8(0).frame(peer).u64(*index);
            }
            EnvelopeMode::Group { key_id, index } => {
                w.u8(1).frame(key_id).u64(*index);
            }
        }
        w.frame(nonce);
        w.finish()
    }

    pub(crate) fn seal_and_sign(
        signer: &KeyPair,
        room_id: RoomId,
        mode: EnvelopeMode,
        nonce: [u8; 12],
        key: &[u8; 32],
        plaintext: &[u8],
    ) -> CipherEnvelope {
        let sender = signer.public().to_bytes();
        let header = Self::header(&room_id, &sender, &mode, &nonce);
        let ciphertext = super::seal(key, &nonce, &header, plaintext);
        let mut env = CipherEnvelope {
            room_id,
            sender,
            mode,
            nonce,
            ciphertext,
            signature: [0; identity::SIGNATURE_BYTES],
        };
        env.signature = signer.sign(&env.signing_digest()).to_bytes();
        env
    }

    pub fn aad(&self) -> Vec<u8> {
        Self::header(&self.room_id, &self.sender, &self.mode, &self.nonce)
    }

    pub fn signing_digest(&self) -> Digest32 {
        let mut w = Writer::new();
        w.raw(&self.aad()).frame(&self.ciphertext);
        sha256(&[b"cipher-envelope", w.as_bytes()])
    }

    pub fn index(&self) -> u64 {
        match self.mode {
            EnvelopeMode::Pairwise { index, .. } | EnvelopeMode::Group { index, .. } => index,
        }
    }

    /// True iff `sender` matches the envelope and the signature verifies.
    pub fn verify_signature(&self, sender: &GroupElement) -> bool {
        sender.to_bytes() == self.sender
            && Signature::from_bytes(&self.signature)
                .is_ok_and(|sig| identity::verify(sender, &self.signing_digest(), &sig))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.aad())
            .frame(&self.ciphertext)
            .frame(&self.signature);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<CipherEnvelope, DecodeError> {
        let mut r = Reader::new(bytes);
        let room_id = fixed(r.frame()?, "room id")?;
        let sender = fixed(r.frame()?, "sender")?;
        let mode = match r.u8()? {
            0 => EnvelopeMode::Pairwise {
                peer: fixed(r.frame()?, "peer")?,
                index: r.u64()?,
            },
            1 => EnvelopeMode::Group {
                key_id: fixed(r.frame()?, "key id")?,
                index: r.u64()?,
            },
            _ => return Err(DecodeError::invalid("envelope mode")),
        };
        let nonce = fixed(r.frame()?, "nonce")?;
        let ciphertext = r.frame()?.to_vec();
        let signature = fixed(r.frame()?, "signature")?;
        r.finish()?;
        Ok(CipherEnvelope {
            room_id,
            sender,
            mode,
            nonce,
            ciphertext,
            signature,
        })
    }
}

fn fixed<const N: usize>(bytes: &[u8], what: &'static str) -> Result<[u8; N], DecodeError> {
    bytes.try_into().map_err(|_| DecodeError::invalid(what))
}
