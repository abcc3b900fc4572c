use std::collections::{BTreeMap, BTreeSet};

use crate::codec::{DecodeError, Reader, Writer};
use crate::group_crypto::RoomId;
use crate::hash::{sha256, Digest32};
use crate::identity::{self, Address, KeyPair, SIGNATURE_BYTES};
use crate::pairing::GroupElement;
use crate::room_state::EventId;

use super::envelope::{fixed, relay_digest, BatchKey, InboundBatch, PublicBytes, RelayEnvelope, SignatureBytes};
use super::merkle::merkle_root;
use super::PorError;

/// Cost coefficients are fixed point with three decimals: 1000 is 1.000.
pub const COEFFICIENT_SCALE: u64 = 1000;

/// When an inbound node turns its pending leaves into a receipt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReceiptPolicy {
    pub max_messages: usize,
    pub max_ticks: u64,
}

impl Default for ReceiptPolicy {
    fn default() -> Self {
        ReceiptPolicy {
            max_messages: 64,
            max_ticks: 30,
        }
    }
}

fn verify_sig(key: &PublicBytes, digest: &Digest32, sig: &SignatureBytes) -> bool {
    GroupElement::from_bytes(key).is_ok_and(|pk| identity::verify_event(&pk, digest, sig))
}

fn address_of(key: &PublicBytes) -> Option<Address> {
    GroupElement::from_bytes(key).ok().map(|pk| Address::of(&pk))
}

/// What a relay keeps for every envelope it endorsed. This is also the
/// opening revealed for a sampled workload slot.
///
/// Encoding: `frame(room) frame(event) u64 size frame(outbound) frame(sig_out)
/// frame(relay) frame(next_hop) frame(sig_relay)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelayRecord {
    pub room_id: RoomId,
    pub event_id: EventId,
    pub message_size: u64,
    pub outbound: PublicBytes,
    pub sig_out: SignatureBytes,
    pub relay: PublicBytes,
    pub next_hop: PublicBytes,
    pub sig_relay: SignatureBytes,
}

impl RelayRecord {
    /// Extracts the record from an envelope this relay just endorsed.
    pub fn from_envelope(envelope: &RelayEnvelope) -> Result<RelayRecord, PorError> {
        let e = envelope
            .endorsement
            .as_ref()
            .ok_or(PorError::MissingRelaySignature)?;
        Ok(RelayRecord {
            room_id: envelope.room_id,
            event_id: envelope.event_id,
            message_size: envelope.message_size,
            outbound: envelope.outbound,
            sig_out: envelope.sig_out,
            relay: e.relay,
            next_hop: e.next_hop,
            sig_relay: e.sig_relay,
        })
    }

    fn outbound_body(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.frame(&self.room_id)
            .frame(&self.event_id)
            .u64(self.message_size)
            .frame(&self.outbound);
        w.finish()
    }

    /// Both signatures check out.
    pub fn verify(&self) -> Result<(), PorError> {
        let body = self.outbound_body();
        if !verify_sig(&self.outbound, &sha256(&[b"por-out", &body]), &self.sig_out) {
            return Err(PorError::BadOutboundSignature);
        }
        if !verify_sig(&self.relay, &relay_digest(&body, &self.sig_out, &self.next_hop), &self.sig_relay) {
            return Err(PorError::BadRelaySignature);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.outbound_body())
            .frame(&self.sig_out)
            .frame(&self.relay)
            .frame(&self.next_hop)
            .frame(&self.sig_relay);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<RelayRecord, DecodeError> {
        let mut r = Reader::new(bytes);
        let rec = RelayRecord {
            room_id: fixed(r.frame()?, "room id")?,
            event_id: fixed(r.frame()?, "event id")?,
            message_size: r.u64()?,
            outbound: fixed(r.frame()?, "outbound")?,
            sig_out: fixed(r.frame()?, "sig_out")?,
            relay: fixed(r.frame()?, "relay")?,
            next_hop: fixed(r.frame()?, "next hop")?,
            sig_relay: fixed(r.frame()?, "sig_relay")?,
        };
        r.finish()?;
        Ok(rec)
    }
}

/// Endorsed envelopes at one relay, by event id.
#[derive(Clone, Debug, Default)]
pub struct RelayLedger {
    records: BTreeMap<EventId, RelayRecord>,
}

impl RelayLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, envelope: &RelayEnvelope) -> Result<&RelayRecord, PorError> {
        let rec = RelayRecord::from_envelope(envelope)?;
        Ok(self.records.entry(rec.event_id).or_insert(rec))
    }

    pub fn get(&self, event_id: &EventId) -> Option<&RelayRecord> {
        self.records.get(event_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records for envelopes from the outbound node at `outbound`.
    pub fn for_outbound(&self, outbound: &Address) -> Vec<&RelayRecord> {
        self.records
            .values()
            .filter(|r| address_of(&r.outbound).as_ref() == Some(outbound))
            .collect()
    }
}

/// Envelopes an outbound node sent: `event_id → message_size`.
pub type OutboundLedger = BTreeMap<EventId, u64>;

/// Encoding of the signed body: `frame(outbound_id) frame(relay)
/// u32 n frame(event_id)* u64 coefficient frame(root) frame(inbound)`,
/// followed by `frame(sig_in)` on the wire.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelayReceipt {
    pub outbound_id: Address,
    pub relay: PublicBytes,
    /// Sorted.
    pub event_ids: Vec<EventId>,
    pub cost_coefficient: u64,
    pub merkle_root: Digest32,
    pub inbound: PublicBytes,
    pub sig_in: SignatureBytes,
}

impl RelayReceipt {
    pub fn body(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.frame(&self.outbound_id.0)
            .frame(&self.relay)
            .u32(self.event_ids.len() as u32);
        for id in &self.event_ids {
            w.frame(id);
        }
        w.u64(self.cost_coefficient)
            .frame(&self.merkle_root)
            .frame(&self.inbound);
        w.finish()
    }

    pub fn digest(&self) -> Digest32 {
        sha256(&[b"por-receipt", &self.body()])
    }

    pub fn verify(&self) -> bool {
        verify_sig(&self.inbound, &self.digest(), &self.sig_in)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.body()).frame(&self.sig_in);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<RelayReceipt, DecodeError> {
        let mut r = Reader::new(bytes);
        let outbound_id = Address(fixed(r.frame()?, "outbound id")?);
        let relay = fixed(r.frame()?, "relay")?;
        let n = r.u32()? as usize;
        let mut event_ids = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            event_ids.push(fixed(r.frame()?, "event id")?);
        }
        let rec = RelayReceipt {
            outbound_id,
            relay,
            event_ids,
            cost_coefficient: r.u64()?,
            merkle_root: fixed(r.frame()?, "root")?,
            inbound: fixed(r.frame()?, "inbound")?,
            sig_in: fixed(r.frame()?, "sig_in")?,
        };
        r.finish()?;
        Ok(rec)
    }
}

/// Keys in `batch` whose receipt is due at `now`.
pub fn due_receipts(batch: &InboundBatch, policy: &ReceiptPolicy, now: u64) -> Vec<BatchKey> {
    batch
        .keys()
        .into_iter()
        .filter(|k| {
            batch.pending(k) >= policy.max_messages
                || batch
                    .opened_at(k)
                    .is_some_and(|t| now.saturating_sub(t) >= policy.max_ticks)
        })
        .collect()
}

/// Turns the pending leaves for `key` into a signed receipt if the
/// message threshold or the timer has been reached. `force` flushes
/// regardless.
pub fn build_receipt(
    batch: &mut InboundBatch,
    key: &BatchKey,
    policy: &ReceiptPolicy,
    now: u64,
    force: bool,
    cost_coefficient: u64,
    inbound: &KeyPair,
) -> Option<RelayReceipt> {
    let n = batch.pending(key);
    if n == 0 {
        return None;
    }
    let timed_out = batch
        .opened_at(key)
        .is_some_and(|t| now.saturating_sub(t) >= policy.max_ticks);
    if !force && n < policy.max_messages && !timed_out {
        return None;
    }
    let leaves = batch.take(key);
    let mut receipt = RelayReceipt {
        outbound_id: key.0,
        relay: key.1,
        event_ids: leaves.iter().map(|(id, _)| *id).collect(),
        cost_coefficient,
        merkle_root: merkle_root(&leaves).expect("nonempty batch"),
        inbound: inbound.public().to_bytes(),
        sig_in: [0; SIGNATURE_BYTES],
    };
    receipt.sig_in = inbound.sign(&receipt.digest()).to_bytes();
    Some(receipt)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BillLine {
    pub event_id: EventId,
    pub message_size: u64,
    pub cost_coefficient: u64,
}

impl BillLine {
    /// Fee in milli-credits.
    pub fn fee(&self) -> u64 {
        self.message_size * self.cost_coefficient
    }
}

/// A compiled bill. `relay_sig` is the relay's compilation signature and
/// `outbound_sig` the outbound node's endorsement over the body and
/// `relay_sig`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelayBill {
    pub outbound: PublicBytes,
    pub relay: PublicBytes,
    /// Sorted by event id.
    pub lines: Vec<BillLine>,
    pub merkle_root: Digest32,
    pub receipts: Vec<RelayReceipt>,
    pub relay_sig: SignatureBytes,
    pub outbound_sig: Option<SignatureBytes>,
}

impl RelayBill {
    pub fn body(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.frame(&self.outbound)
            .frame(&self.relay)
            .u32(self.lines.len() as u32);
        for l in &self.lines {
            w.frame(&l.event_id).u64(l.message_size).u64(l.cost_coefficient);
        }
        w.frame(&self.merkle_root).u32(self.receipts.len() as u32);
        for r in &self.receipts {
            w.frame(&r.to_bytes());
        }
        w.finish()
    }

    pub(crate) fn relay_digest(&self) -> Digest32 {
        sha256(&[b"por-bill", &self.body()])
    }

    fn endorse_digest(&self) -> Digest32 {
        sha256(&[b"por-bill-endorse", &self.body(), &self.relay_sig])
    }

    /// Total fee in milli-credits: `Σ message_size × cost_coefficient`.
    pub fn total(&self) -> u64 {
        self.lines.iter().map(BillLine::fee).sum()
    }

    pub fn event_ids(&self) -> impl Iterator<Item = &EventId> {
        self.lines.iter().map(|l| &l.event_id)
    }

    /// Structural checks shared by the outbound node and validators: the
    /// relay signature, every receipt signature, and that the receipts
    /// cover exactly the bill lines with matching roots.
    pub fn verify_structure(&self) -> Result<(), PorError> {
        if !verify_sig(&self.relay, &self.relay_digest(), &self.relay_sig) {
            return Err(PorError::BadRelaySignature);
        }
        let outbound_id = address_of(&self.outbound).ok_or(PorError::BadOutboundSignature)?;
        let lines: BTreeMap<EventId, &BillLine> = self.lines.iter().map(|l| (l.event_id, l)).collect();
        if lines.len() != self.lines.len() {
            return Err(PorError::RootMismatch);
        }
        let leaves: Vec<(EventId, u64)> = self.lines.iter().map(|l| (l.event_id, l.message_size)).collect();
        if merkle_root(&leaves) != Some(self.merkle_root) {
            return Err(PorError::RootMismatch);
        }
        let mut covered = BTreeSet::new();
        for r in &self.receipts {
            if !r.verify() {
                return Err(PorError::BadInboundSignature);
            }
            if r.outbound_id != outbound_id || r.relay != self.relay {
                return Err(PorError::ReceiptMismatch);
            }
            let mut subset = Vec::with_capacity(r.event_ids.len());
            for id in &r.event_ids {
                let line = lines.get(id).ok_or(PorError::RootMismatch)?;
                if line.cost_coefficient != r.cost_coefficient || !covered.insert(*id) {
                    return Err(PorError::RootMismatch);
                }
                subset.push((*id, line.message_size));
            }
            if merkle_root(&subset) != Some(r.merkle_root) {
                return Err(PorError::RootMismatch);
            }
        }
        if covered.len() != lines.len() {
            return Err(PorError::MissingEvents {
                missing: lines.len() - covered.len(),
            });
        }
        Ok(())
    }

    /// Everything [`RelayBill::verify_structure`] checks plus the outbound
    /// endorsement.
    pub fn verify_endorsed(&self) -> Result<(), PorError> {
        self.verify_structure()?;
        let sig = self.outbound_sig.ok_or(PorError::MissingEndorsement)?;
        if !verify_sig(&self.outbound, &self.endorse_digest(), &sig) {
            return Err(PorError::BadOutboundSignature);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.body()).frame(&self.relay_sig);
        match &self.outbound_sig {
            Some(s) => w.u8(1).frame(s),
            None => w.u8(0),
        };
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<RelayBill, DecodeError> {
        let mut r = Reader::new(bytes);
        let outbound = fixed(r.frame()?, "outbound")?;
        let relay = fixed(r.frame()?, "relay")?;
        let n = r.u32()? as usize;
        let mut lines = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            lines.push(BillLine {
                event_id: fixed(r.frame()?, "event id")?,
                message_size: r.u64()?,
                cost_coefficient: r.u64()?,
            });
        }
        let merkle_root = fixed(r.frame()?, "root")?;
        let m = r.u32()? as usize;
        let mut receipts = Vec::with_capacity(m.min(1024));
        for _ in 0..m {
            receipts.push(RelayReceipt::from_bytes(r.frame()?)?);
        }
        let relay_sig = fixed(r.frame()?, "relay sig")?;
        let outbound_sig = match r.u8()? {
            0 => None,
            1 => Some(fixed(r.frame()?, "outbound sig")?),
            _ => return Err(DecodeError::invalid("endorsement flag")),
        };
        r.finish()?;
        Ok(RelayBill {
            outbound,
            relay,
            lines,
            merkle_root,
            receipts,
            relay_sig,
            outbound_sig,
        })
    }
}

/// Step 4, relay side: checks every receipt against the relay's own
/// records and compiles one bill for the outbound node `outbound_id`.
pub fn compile_bill(
    receipts: &[RelayReceipt],
    ledger: &RelayLedger,
    outbound_id: &Address,
    relay: &KeyPair,
) -> Result<RelayBill, PorError> {
    let relay_pk = relay.public().to_bytes();
    let expected = ledger.for_outbound(outbound_id);
    let outbound = expected.first().ok_or(PorError::NoReceipts)?.outbound;
    if receipts.is_empty() {
        return Err(PorError::NoReceipts);
    }
    let mut lines = Vec::new();
    for r in receipts {
        if !r.verify() {
            return Err(PorError::BadInboundSignature);
        }
        if r.outbound_id != *outbound_id || r.relay != relay_pk {
            return Err(PorError::ReceiptMismatch);
        }
        let mut subset = Vec::with_capacity(r.event_ids.len());
        for id in &r.event_ids {
            let rec = ledger.get(id).ok_or(PorError::RootMismatch)?;
            if rec.next_hop != r.inbound {
                return Err(PorError::WrongNextHop);
            }
            subset.push((*id, rec.message_size));
            lines.push(BillLine {
                event_id: *id,
                message_size: rec.message_size,
                cost_coefficient: r.cost_coefficient,
            });
        }
        if merkle_root(&subset) != Some(r.merkle_root) {
            return Err(PorError::RootMismatch);
        }
    }
    lines.sort_unstable_by_key(|l| l.event_id);
    let before = lines.len();
    lines.dedup_by(|a, b| a.event_id == b.event_id);
    if lines.len() != before {
        return Err(PorError::Replay("event billed twice".into()));
    }
    let missing = expected
        .iter()
        .filter(|rec| lines.binary_search_by(|l| l.event_id.cmp(&rec.event_id)).is_err())
        .count();
    if missing > 0 {
        return Err(PorError::MissingEvents { missing });
    }
    let leaves: Vec<(EventId, u64)> = lines.iter().map(|l| (l.event_id, l.message_size)).collect();
    let mut bill = RelayBill {
        outbound,
        relay: relay_pk,
        merkle_root: merkle_root(&leaves).expect("nonempty"),
        lines,
        receipts: receipts.to_vec(),
        relay_sig: [0; SIGNATURE_BYTES],
        outbound_sig: None,
    };
    bill.relay_sig = relay.sign(&bill.relay_digest()).to_bytes();
    Ok(bill)
}

/// Step 4, outbound side: checks the bill against the outbound node's own
/// record of what it sent, then endorses it.
pub fn outbound_endorse(
    bill: &RelayBill,
    sent: &OutboundLedger,
    outbound: &KeyPair,
) -> Result<RelayBill, PorError> {
    if bill.outbound != outbound.public().to_bytes() {
        return Err(PorError::ReceiptMismatch);
    }
    bill.verify_structure()?;
    let mut own = Vec::with_capacity(bill.lines.len());
    for l in &bill.lines {
        let size = sent.get(&l.event_id).ok_or(PorError::RootMismatch)?;
        own.push((l.event_id, *size));
    }
    if merkle_root(&own) != Some(bill.merkle_root) {
        return Err(PorError::RootMismatch);
    }
    let mut out = bill.clone();
    out.outbound_sig = Some(outbound.sign(&bill.endorse_digest()).to_bytes());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::envelope::{assemble_outbound, inbound_accept, relay_endorse, Membership};
    use super::*;

    struct Run {
        out: KeyPair,
        relay: KeyPair,
        inbound: KeyPair,
        ledger: RelayLedger,
        sent: OutboundLedger,
        receipts: Vec<RelayReceipt>,
    }

    fn run(n: usize, policy: ReceiptPolicy) -> Run {
        let out = KeyPair::from_seed(b"o");
        let relay = KeyPair::from_seed(b"r");
        let inbound = KeyPair::from_seed(b"i");
        let members = Membership::new([1; 32], [out.address(), inbound.address()]);
        let mut ledger = RelayLedger::new();
        let mut sent = OutboundLedger::new();
        let mut batch = InboundBatch::new(&inbound.public());
        let mut receipts = Vec::new();
        let key = (out.address(), relay.public().to_bytes());
        for i in 0..n {
            let id = sha256(&[&(i as u64).to_be_bytes()]);
            let env = assemble_outbound([1; 32], id, vec![7; 1 + i % 50], &out).unwrap();
            sent.insert(id, env.message_size);
            let env = relay_endorse(&env, &members, &relay, &inbound.public().to_bytes()).unwrap();
            ledger.record(&env).unwrap();
            // four messages per tick: 100 messages span 25 ticks, under the timer
            inbound_accept(&env, &members, &mut batch, (i / 4) as u64).unwrap();
            receipts.extend(build_receipt(&mut batch, &key, &policy, (i / 4) as u64, false, 1500, &inbound));
        }
        receipts.extend(build_receipt(&mut batch, &key, &policy, u64::MAX, true, 1500, &inbound));
        Run {
            out,
            relay,
            inbound,
            ledger,
            sent,
            receipts,
        }
    }

    #[test]
    fn honest_bill_settles() {
        let r = run(100, ReceiptPolicy::default());
        assert_eq!(r.receipts.len(), 2);
        let bill = compile_bill(&r.receipts, &r.ledger, &r.out.address(), &r.relay).unwrap();
        let endorsed = outbound_endorse(&bill, &r.sent, &r.out).unwrap();
        endorsed.verify_endorsed().unwrap();
        let expected: u64 = r.sent.values().map(|s| s * 1500).sum();
        assert_eq!(endorsed.total(), expected);
        assert_eq!(RelayBill::from_bytes(&endorsed.to_bytes()).unwrap(), endorsed);
        let _ = &r.inbound;
    }

    #[test]
    fn receipt_waits_for_threshold_or_timer() {
        let policy = ReceiptPolicy {
            max_messages: 10,
            max_ticks: 5,
        };
        let inbound = KeyPair::from_seed(b"i");
        let out = KeyPair::from_seed(b"o");
        let relay = KeyPair::from_seed(b"r");
        let members = Membership::new([1; 32], [out.address(), inbound.address()]);
        let mut batch = InboundBatch::new(&inbound.public());
        let env = assemble_outbound([1; 32], [9; 32], vec![1, 2, 3], &out).unwrap();
        let env = relay_endorse(&env, &members, &relay, &inbound.public().to_bytes()).unwrap();
        inbound_accept(&env, &members, &mut batch, 100).unwrap();
        let key = (out.address(), relay.public().to_bytes());
        assert!(due_receipts(&batch, &policy, 104).is_empty());
        assert!(build_receipt(&mut batch, &key, &policy, 104, false, 1000, &inbound).is_none());
        assert_eq!(due_receipts(&batch, &policy, 105), vec![key]);
        let receipt = build_receipt(&mut batch, &key, &policy, 105, false, 1000, &inbound).unwrap();
        assert_eq!(receipt.event_ids, vec![[9; 32]]);
        assert_eq!(receipt.merkle_root, super::super::merkle::leaf_hash(&[9; 32], 3));
        assert_eq!(RelayReceipt::from_bytes(&receipt.to_bytes()).unwrap(), receipt);
    }

    #[test]
    fn inflated_size_caught_by_outbound() {
        let r = run(20, ReceiptPolicy::default());
        let mut bill = compile_bill(&r.receipts, &r.ledger, &r.out.address(), &r.relay).unwrap();
        bill.lines[3].message_size += 1;
        let leaves: Vec<_> = bill.lines.iter().map(|l| (l.event_id, l.message_size)).collect();
        bill.merkle_root = merkle_root(&leaves).unwrap();
        bill.relay_sig = r.relay.sign(&bill.relay_digest()).to_bytes();
        assert_eq!(outbound_endorse(&bill, &r.sent, &r.out).unwrap_err(), PorError::RootMismatch);
    }

    #[test]
    fn dropped_receipt_is_missing_events() {
        let r = run(100, ReceiptPolicy::default());
        let err = compile_bill(&r.receipts[..1], &r.ledger, &r.out.address(), &r.relay).unwrap_err();
        assert_eq!(err, PorError::MissingEvents { missing: 36 });
    }

    #[test]
    fn forged_receipt_signature_rejected() {
        let r = run(10, ReceiptPolicy::default());
        let mut receipts = r.receipts.clone();
        receipts[0].cost_coefficient += 1;
        assert_eq!(
            compile_bill(&receipts, &r.ledger, &r.out.address(), &r.relay).unwrap_err(),
            PorError::BadInboundSignature
        );
    }
}
