//! Per-epoch workload commitments.
//!
//! A relay fills one vector slot per endorsed envelope with
//! `H(event_id ‖ sig_relay) mod p` and keeps the KZG commitment current with
//! one homomorphic update per slot. When the epoch closes, a Fiat-Shamir
//! seed over the commitment picks the sampled slots and the relay answers
//! with a subvector proof plus the records behind each sampled slot.
//!
//! Because the digest covers the relay's own signature, a relay that copies
//! another relay's envelopes cannot produce matching openings.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::codec::{DecodeError, Reader, Writer};
use crate::hash::{hash_to_scalar, sha256, Digest32};
use crate::kzg::{Commitment, KzgParams, SubvectorProof};
use crate::pairing::Scalar;

use super::envelope::{fixed, PublicBytes, RelayEnvelope};
use super::settlement::RelayRecord;
use super::PorError;

/// Slots per epoch.
pub const DEFAULT_EPOCH_CAPACITY: usize = 128;

/// Sampled slots per proof (fewer if the epoch holds fewer records).
pub const SAMPLE_SIZE: usize = 16;

const EPOCH_PARAMS_SEED: u64 = 0x5eed_e90c;

/// Shared parameters for epochs of `capacity` slots.
pub fn epoch_params(capacity: usize) -> Result<KzgParams, PorError> {
    Ok(KzgParams::setup_seeded(capacity, EPOCH_PARAMS_SEED)?)
}

pub fn slot_digest(event_id: &[u8; 32], sig_relay: &[u8]) -> Scalar {
    hash_to_scalar(&[event_id, sig_relay])
}

/// Challenge seed bound to the relay, the epoch and the sealed commitment.
pub fn sample_seed(relay: &PublicBytes, epoch: u64, commitment: &Commitment) -> Digest32 {
    sha256(&[b"por-sample", relay, &epoch.to_be_bytes(), &commitment.to_bytes()])
}

/// `min(SAMPLE_SIZE, fill)` distinct slots below `fill`, sorted.
pub fn sample_indices(seed: &Digest32, fill: usize) -> Vec<u64> {
    let mut rng = ChaCha20Rng::from_seed(*seed);
    let mut picked: Vec<u64> = sample(&mut rng, fill, SAMPLE_SIZE.min(fill))
        .into_iter()
        .map(|i| i as u64)
        .collect();
    picked.sort_unstable();
    picked
}

#[derive(Clone, Debug)]
pub struct WorkloadEpoch {
    epoch: u64,
    relay: PublicBytes,
    capacity: usize,
    values: Vec<Scalar>,
    records: Vec<RelayRecord>,
    commitment: Commitment,
}

impl WorkloadEpoch {
    pub fn new(epoch: u64, relay: PublicBytes, capacity: usize) -> Self {
        WorkloadEpoch {
            epoch,
            relay,
            capacity,
            values: vec![Scalar::ZERO; capacity],
            records: Vec::new(),
            commitment: Commitment::identity(),
        }
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn relay(&self) -> &PublicBytes {
        &self.relay
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn fill(&self) -> usize {
        self.records.len()
    }

    pub fn is_full(&self) -> bool {
        self.fill() == self.capacity
    }

    pub fn values(&self) -> &[Scalar] {
        &self.values
    }

    pub fn records(&self) -> &[RelayRecord] {
        &self.records
    }

    pub fn commitment(&self) -> Commitment {
        self.commitment
    }

    /// The Fiat-Shamir challenge for the current commitment.
    pub fn sample_seed(&self) -> Digest32 {
        sample_seed(&self.relay, self.epoch, &self.commitment)
    }

    /// Puts an envelope this relay endorsed into the next free slot and
    /// returns the slot index.
    pub fn record_relay(&mut self, params: &KzgParams, envelope: &RelayEnvelope) -> Result<u64, PorError> {
        if self.is_full() {
            return Err(PorError::EpochFull {
                capacity: self.capacity,
            });
        }
        let record = RelayRecord::from_envelope(envelope)?;
        if record.relay != self.relay {
            return Err(PorError::ForeignEnvelope);
        }
        let slot = self.records.len() as u64;
        let digest = slot_digest(&record.event_id, &record.sig_relay);
        self.commitment = params.update_commitment(&self.commitment, slot, digest)?;
        self.values[slot as usize] = digest;
        self.records.push(record);
        Ok(slot)
    }

    /// Opens the slots chosen by `seed`.
    pub fn prove_workload(&self, params: &KzgParams, seed: &Digest32) -> Result<WorkloadProof, PorError> {
        if self.records.is_empty() {
            return Err(PorError::EmptyEpoch);
        }
        let indices = sample_indices(seed, self.fill());
        let proof = params.prove_subvector(&self.values, &indices)?;
        let openings = indices.iter().map(|&i| self.records[i as usize].clone()).collect();
        Ok(WorkloadProof {
            epoch: self.epoch,
            relay: self.relay,
            fill: self.fill() as u64,
            commitment: self.commitment,
            seed: *seed,
            proof,
            openings,
        })
    }
}

/// Encoding: `u64 epoch frame(relay) u64 fill frame(commitment) frame(seed)
/// frame(subvector proof) u32 n frame(record)*`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkloadProof {
    pub epoch: u64,
    pub relay: PublicBytes,
    pub fill: u64,
    pub commitment: Commitment,
    pub seed: Digest32,
    pub proof: SubvectorProof,
    pub openings: Vec<RelayRecord>,
}

impl WorkloadProof {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.epoch)
            .frame(&self.relay)
            .u64(self.fill)
            .frame(&self.commitment.to_bytes())
            .frame(&self.seed)
            .frame(&self.proof.to_bytes())
            .u32(self.openings.len() as u32);
        for o in &self.openings {
            w.frame(&o.to_bytes());
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<WorkloadProof, DecodeError> {
        let mut r = Reader::new(bytes);
        let epoch = r.u64()?;
        let relay = fixed(r.frame()?, "relay")?;
        let fill = r.u64()?;
        let commitment = Commitment::from_bytes(r.frame()?)?;
        let seed = fixed(r.frame()?, "seed")?;
        let proof = SubvectorProof::from_bytes(r.frame()?)?;
        let n = r.u32()? as usize;
        let mut openings = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            openings.push(RelayRecord::from_bytes(r.frame()?)?);
        }
        r.finish()?;
        Ok(WorkloadProof {
            epoch,
            relay,
            fill,
            commitment,
            seed,
            proof,
            openings,
        })
    }
}

/// Checks a workload proof against the challenge `seed` the verifier
/// expects: the sampled slots, every opening's signatures and digest, and
/// the pairing check.
pub fn verify_workload(params: &KzgParams, proof: &WorkloadProof, seed: &Digest32) -> Result<(), PorError> {
    if proof.seed != *seed {
        return Err(PorError::BadWorkloadProof("unexpected challenge seed"));
    }
    let fill = usize::try_from(proof.fill).unwrap_or(usize::MAX);
    if fill == 0 || fill > params.size() {
        return Err(PorError::BadWorkloadProof("fill out of range"));
    }
    if proof.proof.indices != sample_indices(seed, fill) {
        return Err(PorError::BadWorkloadProof("sampled slots differ"));
    }
    if proof.openings.len() != proof.proof.values.len() {
        return Err(PorError::BadWorkloadProof("opening count"));
    }
    for (record, value) in proof.openings.iter().zip(&proof.proof.values) {
        if record.relay != proof.relay {
            return Err(PorError::ForeignEnvelope);
        }
        record.verify()?;
        if slot_digest(&record.event_id, &record.sig_relay) != *value {
            return Err(PorError::BadWorkloadProof("opening does not match slot"));
        }
    }
    if !params.verify_subvector_proof(&proof.commitment, &proof.proof) {
        return Err(PorError::BadWorkloadProof("pairing check failed"));
    }
    Ok(())
}
