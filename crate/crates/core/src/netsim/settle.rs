use std::collections::{BTreeMap, BTreeSet};

use crate::group_crypto::RoomId;
use crate::hash::sha256;
use crate::identity::{Address, KeyPair};
use crate::kzg::KzgParams;
use crate::poa::{CreditLedger, Submission};
use crate::por::{
    assemble_outbound, build_receipt, compile_bill, epoch_params, inbound_accept, outbound_endorse, relay_endorse,
    InboundBatch, Membership, OutboundLedger, PorError, ReceiptPolicy, RelayLedger, RelayReceipt, WorkloadEpoch,
    DEFAULT_EPOCH_CAPACITY,
};
use crate::room_state::EventId;

/// Milli-credit totals over every settled segment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SettlementTotals {
    pub relayed: u64,
    pub epochs: u64,
    pub outbound_total: u64,
    pub relay_total: u64,
    pub inbound_total: u64,
    pub credited: u64,
    pub rejected: u64,
}

impl SettlementTotals {
    /// All three parties agree and the validator paid it all.
    pub fn balanced(&self) -> bool {
        self.rejected == 0
            && self.outbound_total == self.relay_total
            && self.relay_total == self.inbound_total
            && self.inbound_total == self.credited
    }
}

/// A node taking part in settlement.
#[derive(Clone, Copy)]
pub(crate) struct Party<'a> {
    pub index: usize,
    pub name: &'a str,
    pub key: &'a KeyPair,
}

/// One open epoch of the stream from an outbound client node through one
/// relay edge.
struct Stream {
    epoch: WorkloadEpoch,
    ledger: RelayLedger,
    sent: OutboundLedger,
    receipts: Vec<RelayReceipt>,
    inbounds: BTreeSet<usize>,
    outbound_name: String,
    relay_name: String,
}

/// Runs the relay settlement steps for every edge → client node hop of a
/// simulation. Each relayed copy is its own envelope, identified by the
/// event id and the receiving node.
pub(crate) struct Settler {
    params: KzgParams,
    policy: ReceiptPolicy,
    coefficient: u64,
    batches: BTreeMap<usize, InboundBatch>,
    inbound_keys: BTreeMap<usize, KeyPair>,
    outbound_keys: BTreeMap<usize, KeyPair>,
    relay_keys: BTreeMap<usize, KeyPair>,
    streams: BTreeMap<(usize, usize), Stream>,
    next_epoch: BTreeMap<usize, u64>,
    validator: CreditLedger,
    pub totals: SettlementTotals,
    pub trace: Vec<String>,
}

pub(crate) fn copy_id(event_id: &EventId, inbound: &KeyPair) -> EventId {
    sha256(&[b"relay-copy", event_id, &inbound.public().to_bytes()])
}

impl Settler {
    pub fn new(coefficient: u64) -> Self {
        Settler {
            params: epoch_params(DEFAULT_EPOCH_CAPACITY).expect("valid capacity"),
            policy: ReceiptPolicy::default(),
            coefficient,
            batches: BTreeMap::new(),
            inbound_keys: BTreeMap::new(),
            outbound_keys: BTreeMap::new(),
            relay_keys: BTreeMap::new(),
            streams: BTreeMap::new(),
            next_epoch: BTreeMap::new(),
            validator: CreditLedger::new(),
            totals: SettlementTotals::default(),
            trace: Vec::new(),
        }
    }

    /// Steps 1 to 3 for one hop, then a receipt if the batch is due. A
    /// full epoch settles on the spot.
    #[allow(clippy::too_many_arguments)]
    pub fn relay(
        &mut self,
        room: RoomId,
        membership: &Membership,
        event_id: &EventId,
        payload: Vec<u8>,
        outbound: Party,
        relay: Party,
        inbound: Party,
        now: u64,
    ) {
        if let Err(e) = self.try_relay(room, membership, event_id, payload, outbound, relay, inbound, now) {
            self.totals.rejected += 1;
            self.trace.push(format!(
                "t={now} segment {}->{}->{} status=rejected reason=\"{e}\"",
                outbound.name, relay.name, inbound.name
            ));
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn try_relay(
        &mut self,
        room: RoomId,
        membership: &Membership,
        event_id: &EventId,
        payload: Vec<u8>,
        outbound: Party,
        relay: Party,
        inbound: Party,
        now: u64,
    ) -> Result<(), PorError> {
        let capacity = self.params.size();
        let relay_pk = relay.key.public().to_bytes();
        let stream_key = (outbound.index, relay.index);
        if !self.streams.contains_key(&stream_key) {
            let n = self.next_epoch.entry(relay.index).or_insert(0);
            let epoch = WorkloadEpoch::new(*n, relay_pk, capacity);
            *n += 1;
            self.streams.insert(
                stream_key,
                Stream {
                    epoch,
                    ledger: RelayLedger::new(),
                    sent: OutboundLedger::new(),
                    receipts: Vec::new(),
                    inbounds: BTreeSet::new(),
                    outbound_name: outbound.name.to_string(),
                    relay_name: relay.name.to_string(),
                },
            );
        }
        self.outbound_keys.insert(outbound.index, *outbound.key);
        self.relay_keys.insert(relay.index, *relay.key);
        self.inbound_keys.insert(inbound.index, *inbound.key);
        let stream = self.streams.get_mut(&stream_key).expect("stream opened above");

        let id = copy_id(event_id, inbound.key);
        let env = assemble_outbound(room, id, payload, outbound.key)?;
        stream.sent.insert(id, env.message_size);
        self.totals.outbound_total += env.message_size * self.coefficient;

        let env = relay_endorse(&env, membership, relay.key, &inbound.key.public().to_bytes())?;
        stream.ledger.record(&env)?;
        stream.epoch.record_relay(&self.params, &env)?;

        let batch = self
            .batches
            .entry(inbound.index)
            .or_insert_with(|| InboundBatch::new(&inbound.key.public()));
        let leaf = inbound_accept(&env, membership, batch, now)?;
        self.totals.inbound_total += leaf.message_size * self.coefficient;
        self.totals.relayed += 1;
        stream.inbounds.insert(inbound.index);
        let key = (outbound.key.address(), relay_pk);
        if let Some(r) = build_receipt(batch, &key, &self.policy, now, false, self.coefficient, inbound.key) {
            stream.receipts.push(r);
        }
        if stream.epoch.is_full() {
            self.close(stream_key, now);
        }
        Ok(())
    }

    /// Settles every open epoch.
    pub fn finish(&mut self, now: u64) {
        let open: Vec<_> = self.streams.keys().copied().collect();
        for key in open {
            self.close(key, now);
        }
    }

    fn close(&mut self, key: (usize, usize), now: u64) {
        let Some(mut stream) = self.streams.remove(&key) else {
            return;
        };
        let outbound = self.outbound_keys[&key.0];
        let relay = self.relay_keys[&key.1];
        let batch_key = (outbound.address(), relay.public().to_bytes());
        for i in &stream.inbounds {
            let batch = self.batches.get_mut(i).expect("batch of a recorded inbound");
            let inbound = &self.inbound_keys[i];
            if let Some(r) = build_receipt(batch, &batch_key, &self.policy, now, true, self.coefficient, inbound) {
                stream.receipts.push(r);
            }
        }
        let head = format!(
            "t={now} epoch relay={} outbound={} number={} fill={} receipts={}",
            stream.relay_name,
            stream.outbound_name,
            stream.epoch.epoch(),
            stream.epoch.fill(),
            stream.receipts.len()
        );
        match self.settle(&stream, &outbound.address(), &outbound, &relay) {
            Ok((billed, credited)) => {
                self.totals.epochs += 1;
                self.totals.relay_total += billed;
                self.totals.credited += credited;
                self.trace.push(format!("{head} billed={billed} credited={credited} status=ok"));
            }
            Err(reason) => {
                self.totals.rejected += 1;
                self.trace.push(format!("{head} status=rejected reason=\"{reason}\""));
            }
        }
    }

    fn settle(
        &mut self,
        stream: &Stream,
        outbound_id: &Address,
        outbound: &KeyPair,
        relay: &KeyPair,
    ) -> Result<(u64, u64), String> {
        let bill = compile_bill(&stream.receipts, &stream.ledger, outbound_id, relay).map_err(|e| e.to_string())?;
        let billed = bill.total();
        let bill = outbound_endorse(&bill, &stream.sent, outbound).map_err(|e| e.to_string())?;
        let workload = stream
            .epoch
            .prove_workload(&self.params, &stream.epoch.sample_seed())
            .map_err(|e| e.to_string())?;
        let credited = self
            .validator
            .assess_por(&self.params, &Submission { workload, bill })
            .map_err(|e| e.to_string())?;
        Ok((billed, credited))
    }
}
