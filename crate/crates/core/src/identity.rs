//! Keys, Schnorr signatures and DID documents.
//!
//! A DID document binds a long-lived *master* key (the wallet) to a
//! per-device session key. Issuance takes two signatures: the master key
//! signs the document body (`controller_signature`), then the device key
//! signs the body together with the controller signature
//! (`key_signature`). The device signs last, so the key signature commits
//! to the exact controller signature it was issued under.
//!
//! Signatures are Schnorr over G1 with nonces derived from
//! `(secret, digest)`, so signing is deterministic.
//!
//! # Canonical document body
//!
//! ```text
//! frame(master_address: 20 bytes)
//! frame(master_public:  48 bytes, compressed G1)
//! frame(device_public:  48 bytes, compressed G1)
//! issued_at: u64 big-endian
//! ```
//!
//! `controller_signature` signs `SHA-256("did-controller" ‖ body)`;
//! `key_signature` signs `SHA-256("did-key" ‖ body ‖ frame(controller_signature))`.

use std::collections::BTreeMap;
use std::fmt;

use rand::RngCore;

use crate::codec::{DecodeError, Reader, Writer};
use crate::hash::{hash_to_scalar, hash_to_scalar_wide, sha256, Digest32};
use crate::pairing::{multi_scalar_mul, GroupElement, Scalar, GROUP_BYTES, SCALAR_BYTES};

/// Width of an encoded [`Signature`].
pub const SIGNATURE_BYTES: usize = GROUP_BYTES + SCALAR_BYTES;

/// 20-byte account identifier: the last 20 bytes of `SHA-256(public key)`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub fn of(public: &GroupElement) -> Address {
        let digest = sha256(&[&public.to_bytes()]);
        Address(digest[12..].try_into().unwrap())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", self.to_hex())
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", self.to_hex())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct KeyPair {
    secret: Scalar,
    public: GroupElement,
}

impl KeyPair {
    pub fn from_secret(secret: Scalar) -> KeyPair {
        KeyPair {
            secret,
            public: GroupElement::generator() * secret,
        }
    }

    pub fn generate<R: RngCore + ?Sized>(rng: &mut R) -> KeyPair {
        KeyPair::from_secret(Scalar::random_nonzero(rng))
    }

    /// Deterministic key from arbitrary seed material.
    pub fn from_seed(seed: &[u8]) -> KeyPair {
        let mut secret = hash_to_scalar(&[b"keypair-seed", seed]);
        if secret.is_zero() {
            secret = Scalar::ONE;
        }
        KeyPair::from_secret(secret)
    }

    pub fn secret(&self) -> Scalar {
        self.secret
    }

    pub fn public(&self) -> GroupElement {
        self.public
    }

    pub fn address(&self) -> Address {
        Address::of(&self.public)
    }

    pub fn sign(&self, digest: &Digest32) -> Signature {
        sign(self, digest)
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("address", &self.address())
            .finish_non_exhaustive()
    }
}

/// `(R, s)` with `s·g = R + e·P`, `e = H(R ‖ P ‖ digest)`.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature {
    commitment: GroupElement,
    response: Scalar,
}

impl Signature {
    pub fn to_bytes(&self) -> [u8; SIGNATURE_BYTES] {
        let mut out = [0u8; SIGNATURE_BYTES];
        out[..GROUP_BYTES].copy_from_slice(&self.commitment.to_bytes());
        out[GROUP_BYTES..].copy_from_slice(&self.response.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Signature, DecodeError> {
        if bytes.len() != SIGNATURE_BYTES {
            return Err(DecodeError::invalid("signature length"));
        }
        Ok(Signature {
            commitment: GroupElement::from_bytes(&bytes[..GROUP_BYTES])?,
            response: Scalar::from_bytes(bytes[GROUP_BYTES..].try_into().unwrap())?,
        })
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature(0x{}..)", hex::encode(&self.to_bytes()[..8]))
    }
}

fn challenge(commitment: &GroupElement, public: &GroupElement, digest: &Digest32) -> Scalar {
    hash_to_scalar(&[
        b"schnorr-challenge",
        &commitment.to_bytes(),
        &public.to_bytes(),
        digest,
    ])
}

pub fn sign(key: &KeyPair, digest: &Digest32) -> Signature {
    let mut nonce = hash_to_scalar_wide(&[b"schnorr-nonce", &key.secret.to_bytes(), digest]);
    if nonce.is_zero() {
        nonce = Scalar::ONE;
    }
    let commitment = GroupElement::generator() * nonce;
    let e = challenge(&commitment, &key.public, digest);
    Signature {
        commitment,
        response: nonce + e * key.secret,
    }
}

pub fn verify(public: &GroupElement, digest: &Digest32, signature: &Signature) -> bool {
    if public.is_identity() {
        return false;
    }
    let e = challenge(&signature.commitment, public, digest);
    let lhs = multi_scalar_mul(&[signature.response, -e], &[GroupElement::generator(), *public])
        .expect("two scalars, two points");
    lhs == signature.commitment
}

/// Signs an event digest with a device key.
pub fn sign_event(device: &KeyPair, digest: &Digest32) -> Signature {
    sign(device, digest)
}

/// Verifies an encoded signature; malformed encodings verify as false.
pub fn verify_event(public: &GroupElement, digest: &Digest32, signature: &[u8]) -> bool {
    Signature::from_bytes(signature).is_ok_and(|sig| verify(public, digest, &sig))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DidDocument {
    pub master_address: Address,
    pub master_public: GroupElement,
    pub device_public: GroupElement,
    pub issued_at: u64,
    pub controller_signature: Signature,
    pub key_signature: Signature,
}

impl DidDocument {
    pub fn body(&self) -> Vec<u8> {
        document_body(
            &self.master_address,
            &self.master_public,
            &self.device_public,
            self.issued_at,
        )
    }

    pub fn controller_digest(&self) -> Digest32 {
        sha256(&[b"did-controller", &self.body()])
    }

    pub fn key_digest(&self) -> Digest32 {
        key_digest(&self.body(), &self.controller_signature)
    }

    /// `body ‖ frame(controller_signature) ‖ frame(key_signature)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.body())
            .frame(&self.controller_signature.to_bytes())
            .frame(&self.key_signature.to_bytes());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<DidDocument, DecodeError> {
        let mut r = Reader::new(bytes);
        let master_address = Address(
            r.frame()?
                .try_into()
                .map_err(|_| DecodeError::invalid("address"))?,
        );
        let master_public = GroupElement::from_bytes(r.frame()?)?;
        let device_public = GroupElement::from_bytes(r.frame()?)?;
        let issued_at = r.u64()?;
        let controller_signature = Signature::from_bytes(r.frame()?)?;
        let key_signature = Signature::from_bytes(r.frame()?)?;
        r.finish()?;
        Ok(DidDocument {
            master_address,
            master_public,
            device_public,
            issued_at,
            controller_signature,
            key_signature,
        })
    }
}

fn document_body(
    master_address: &Address,
    master_public: &GroupElement,
    device_public: &GroupElement,
    issued_at: u64,
) -> Vec<u8> {
    let mut w = Writer::new();
    w.frame(&master_address.0)
        .frame(&master_public.to_bytes())
        .frame(&device_public.to_bytes())
        .u64(issued_at);
    w.finish()
}

fn key_digest(body: &[u8], controller_signature: &Signature) -> Digest32 {
    let mut w = Writer::new();
    w.raw(body).frame(&controller_signature.to_bytes());
    sha256(&[b"did-key", w.as_bytes()])
}

/// Issues a document binding `device` to `master`.
pub fn issue_did(master: &KeyPair, device: &KeyPair, issued_at: u64) -> DidDocument {
    let master_address = master.address();
    let body = document_body(&master_address, &master.public, &device.public, issued_at);
    let controller_signature = sign(master, &sha256(&[b"did-controller", &body]));
    let key_signature = sign(device, &key_digest(&body, &controller_signature));
    DidDocument {
        master_address,
        master_public: master.public,
        device_public: device.public,
        issued_at,
        controller_signature,
        key_signature,
    }
}

/// True iff the address matches the master key and both signatures verify.
pub fn verify_did(doc: &DidDocument) -> bool {
    doc.master_address == Address::of(&doc.master_public)
        && verify(&doc.master_public, &doc.controller_digest(), &doc.controller_signature)
        && verify(&doc.device_public, &doc.key_digest(), &doc.key_signature)
}

/// In-memory DID directory keyed by master address; the simulator's edge
/// nodes serve lookups from it.
#[derive(Clone, Debug, Default)]
pub struct DidRegistry {
    docs: BTreeMap<Address, DidDocument>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("document for {0} does not verify")]
    InvalidDocument(Address),
    #[error("document for {0} is older than the registered one")]
    Stale(Address),
}

impl DidRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers or replaces a document. Replacements must not go back in
    /// time.
    pub fn publish(&mut self, doc: DidDocument) -> Result<(), RegistryError> {
        if !verify_did(&doc) {
            return Err(RegistryError::InvalidDocument(doc.master_address));
        }
        if let Some(existing) = self.docs.get(&doc.master_address) {
            if existing.issued_at > doc.issued_at {
                return Err(RegistryError::Stale(doc.master_address));
            }
        }
        self.docs.insert(doc.master_address, doc);
        Ok(())
    }

    pub fn resolve(&self, address: &Address) -> Option<&DidDocument> {
        self.docs.get(address)
    }

    pub fn device_key(&self, address: &Address) -> Option<GroupElement> {
        self.docs.get(address).map(|d| d.device_public)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}
