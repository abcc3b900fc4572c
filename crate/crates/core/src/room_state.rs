//! Room event DAG and deterministic state resolution.
//!
//! Every event names its parents and carries a depth one greater than the
//! deepest parent. Events whose parents have not arrived yet are parked
//! and applied as soon as the gap closes, so replicas that saw the same
//! events in different orders end up with identical graphs.
//!
//! State resolution picks, for every `(event_type, state_key)`, the state
//! event with the greatest `(depth, event_id)`. This depends only on the
//! set of events, never on arrival order.
//!
//! # Event encoding
//!
//! ```text
//! body = frame(room_id) frame(sender)
//!        u8 kind  (0: message | 1: frame(event_type) frame(state_key))
//!        frame(content) u32 parent_count frame(parent)* u64 depth
//! event_id = SHA-256("room-event" ‖ body)
//! wire     = body ‖ frame(signature over event_id)
//! ```
//!
//! Parents are sorted and deduplicated before encoding.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::group_crypto::RoomId;
use crate::hash::{sha256, Digest32};
use crate::identity::{self, KeyPair, SIGNATURE_BYTES};
use crate::pairing::{GroupElement, GROUP_BYTES};

pub type EventId = Digest32;

/// Largest number of events held while waiting for parents.
pub const PARK_CAPACITY: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    Message,
    State { event_type: String, state_key: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoomEvent {
    pub event_id: EventId,
    pub room_id: RoomId,
    pub sender: [u8; GROUP_BYTES],
    pub kind: EventKind,
    pub content: Vec<u8>,
    pub prev_events: Vec<EventId>,
    pub depth: u64,
    pub signature: [u8; SIGNATURE_BYTES],
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DagError {
    #[error("event id does not match its body")]
    IdMismatch,
    #[error("event signature does not verify")]
    BadSignature,
    #[error("event belongs to another room")]
    WrongRoom,
    #[error("depth {claimed} does not match parents (expected {expected})")]
    DepthMismatch { claimed: u64, expected: u64 },
    #[error("parent is not older than the event")]
    Cycle,
    #[error("park queue is full ({PARK_CAPACITY} events)")]
    ParkFull,
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

impl RoomEvent {
    /// Builds and signs an event. `prev_events` is normalized (sorted,
    /// deduplicated).
    pub fn new(
        signer: &KeyPair,
        room_id: RoomId,
        kind: EventKind,
        content: Vec<u8>,
        mut prev_events: Vec<EventId>,
        depth: u64,
    ) -> RoomEvent {
        prev_events.sort_unstable();
        prev_events.dedup();
        let mut event = RoomEvent {
            event_id: [0; 32],
            room_id,
            sender: signer.public().to_bytes(),
            kind,
            content,
            prev_events,
            depth,
            signature: [0; SIGNATURE_BYTES],
        };
        event.event_id = event.compute_id();
        event.signature = signer.sign(&event.event_id).to_bytes();
        event
    }

    pub fn body(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.frame(&self.room_id).frame(&self.sender);
        match &self.kind {
            EventKind::Message => {
                w.u8(0);
            }
            EventKind::State {
                event_type,
                state_key,
            } => {
                w.u8(1)
                    .frame(event_type.as_bytes())
                    .frame(state_key.as_bytes());
            }
        }
        w.frame(&self.content).u32(self.prev_events.len() as u32);
        for p in &self.prev_events {
            w.frame(p);
        }
        w.u64(self.depth);
        w.finish()
    }

    pub fn compute_id(&self) -> EventId {
        sha256(&[b"room-event", &self.body()])
    }

    pub fn verify(&self) -> Result<(), DagError> {
        if self.compute_id() != self.event_id {
            return Err(DagError::IdMismatch);
        }
        let ok = GroupElement::from_bytes(&self.sender)
            .is_ok_and(|pk| identity::verify_event(&pk, &self.event_id, &self.signature));
        if ok {
            Ok(())
        } else {
            Err(DagError::BadSignature)
        }
    }

    pub fn state_slot(&self) -> Option<(&str, &str)> {
        match &self.kind {
            EventKind::State {
                event_type,
                state_key,
            } => Some((event_type, state_key)),
            EventKind::Message => None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.body()).frame(&self.signature);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<RoomEvent, DecodeError> {
        let mut r = Reader::new(bytes);
        let room_id = fixed(r.frame()?, "room id")?;
        let sender = fixed(r.frame()?, "sender")?;
        let kind = match r.u8()? {
            0 => EventKind::Message,
            1 => EventKind::State {
                event_type: utf8(r.frame()?)?,
                state_key: utf8(r.frame()?)?,
            },
            _ => return Err(DecodeError::invalid("event kind")),
        };
        let content = r.frame()?.to_vec();
        let count = r.u32()? as usize;
        let mut prev_events = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            prev_events.push(fixed(r.frame()?, "parent id")?);
        }
        let depth = r.u64()?;
        let signature = fixed(r.frame()?, "signature")?;
        r.finish()?;
        let mut event = RoomEvent {
            event_id: [0; 32],
            room_id,
            sender,
            kind,
            content,
            prev_events,
            depth,
            signature,
        };
        event.event_id = event.compute_id();
        Ok(event)
    }
}

fn fixed<const N: usize>(bytes: &[u8], what: &'static str) -> Result<[u8; N], DecodeError> {
    bytes.try_into().map_err(|_| DecodeError::invalid(what))
}

fn utf8(bytes: &[u8]) -> Result<String, DecodeError> {
    String::from_utf8(bytes.to_vec()).map_err(|_| DecodeError::invalid("utf-8 string"))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AppendOutcome {
    /// The event and any parked descendants it unblocked, in application
    /// order.
    Applied(Vec<EventId>),
    Duplicate,
    /// Waiting on these parents.
    Parked(Vec<EventId>),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MergeReport {
    pub applied: Vec<EventId>,
    pub parked: usize,
    pub rejected: Vec<(EventId, DagError)>,
}

/// Resolved room state: `(event_type, state_key) → event_id`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StateMap(pub BTreeMap<(String, String), EventId>);

impl StateMap {
    pub fn get(&self, event_type: &str, state_key: &str) -> Option<&EventId> {
        self.0.get(&(event_type.to_string(), state_key.to_string()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `u32 count` then `frame(type) frame(key) frame(event_id)` per entry in
    /// key order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u32(self.0.len() as u32);
        for ((t, k), id) in &self.0 {
            w.frame(t.as_bytes()).frame(k.as_bytes()).frame(id);
        }
        w.finish()
    }
}

#[derive(Clone, Debug)]
pub struct RoomDag {
    room_id: RoomId,
    events: BTreeMap<EventId, RoomEvent>,
    extremities: BTreeSet<EventId>,
    parked: BTreeMap<EventId, RoomEvent>,
    // missing parent -> parked events waiting on it
    waiting: BTreeMap<EventId, BTreeSet<EventId>>,
}

impl RoomDag {
    pub fn new(room_id: RoomId) -> Self {
        RoomDag {
            room_id,
            events: BTreeMap::new(),
            extremities: BTreeSet::new(),
            parked: BTreeMap::new(),
            waiting: BTreeMap::new(),
        }
    }

    pub fn room_id(&self) -> &RoomId {
        &self.room_id
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn get(&self, id: &EventId) -> Option<&RoomEvent> {
        self.events.get(id)
    }

    pub fn contains(&self, id: &EventId) -> bool {
        self.events.contains_key(id)
    }

    pub fn forward_extremities(&self) -> &BTreeSet<EventId> {
        &self.extremities
    }

    pub fn parked_len(&self) -> usize {
        self.parked.len()
    }

    /// Parents referenced by parked events that are still unknown; these are
    /// the backfill targets.
    pub fn missing(&self) -> Vec<EventId> {
        self.waiting.keys().copied().collect()
    }

    /// Events in a topological order: by depth, then event id.
    pub fn topological(&self) -> Vec<&RoomEvent> {
        let mut out: Vec<&RoomEvent> = self.events.values().collect();
        out.sort_by_key(|e| (e.depth, e.event_id));
        out
    }

    /// Builds and signs an event on top of the current extremities.
    pub fn create_event(&self, signer: &KeyPair, kind: EventKind, content: Vec<u8>) -> RoomEvent {
        let parents: Vec<EventId> = self.extremities.iter().copied().collect();
        let depth = 1 + parents
            .iter()
            .map(|p| self.events[p].depth)
            .max()
            .unwrap_or(0);
        RoomEvent::new(signer, self.room_id, kind, content, parents, depth)
    }

    /// Checks and inserts an event, parking it when parents are missing.
    pub fn append_event(&mut self, event: RoomEvent) -> Result<AppendOutcome, DagError> {
        if self.events.contains_key(&event.event_id) || self.parked.contains_key(&event.event_id) {
            return Ok(AppendOutcome::Duplicate);
        }
        if event.room_id != self.room_id {
            return Err(DagError::WrongRoom);
        }
        event.verify()?;
        let missing: Vec<EventId> = event
            .prev_events
            .iter()
            .filter(|p| !self.events.contains_key(*p))
            .copied()
            .collect();
        if !missing.is_empty() {
            if self.parked.len() >= PARK_CAPACITY {
                return Err(DagError::ParkFull);
            }
            for p in &missing {
                self.waiting.entry(*p).or_default().insert(event.event_id);
            }
            self.parked.insert(event.event_id, event);
            return Ok(AppendOutcome::Parked(missing));
        }
        let id = event.event_id;
        self.insert_ready(event)?;
        let mut applied = vec![id];
        self.release(id, &mut applied);
        Ok(AppendOutcome::Applied(applied))
    }

    fn check_depth(&self, event: &RoomEvent) -> Result<(), DagError> {
        let max_parent = event
            .prev_events
            .iter()
            .map(|p| self.events[p].depth)
            .max();
        if max_parent.is_some_and(|d| d >= event.depth) {
            return Err(DagError::Cycle);
        }
        let expected = max_parent.unwrap_or(0) + 1;
        if event.depth != expected {
            return Err(DagError::DepthMismatch {
                claimed: event.depth,
                expected,
            });
        }
        Ok(())
    }

    fn insert_ready(&mut self, event: RoomEvent) -> Result<(), DagError> {
        self.check_depth(&event)?;
        for p in &event.prev_events {
            self.extremities.remove(p);
        }
        self.extremities.insert(event.event_id);
        self.events.insert(event.event_id, event);
        Ok(())
    }

    // Applies parked descendants of `root` whose parents are now complete.
    // Descendants that fail their depth check are dropped.
    fn release(&mut self, root: EventId, applied: &mut Vec<EventId>) {
        let mut queue = VecDeque::from([root]);
        while let Some(parent) = queue.pop_front() {
            let Some(waiters) = self.waiting.remove(&parent) else {
                continue;
            };
            for w in waiters {
                // already applied through another of its parents
                let Some(parked) = self.parked.get(&w) else {
                    continue;
                };
                if !parked.prev_events.iter().all(|p| self.events.contains_key(p)) {
                    continue;
                }
                let event = self.parked.remove(&w).unwrap();
                if self.insert_ready(event).is_ok() {
                    applied.push(w);
                    queue.push_back(w);
                }
            }
        }
    }

    /// Applies a batch of remote events in any order.
    pub fn merge_remote(&mut self, events: &[RoomEvent]) -> MergeReport {
        let mut report = MergeReport::default();
        for event in events {
            match self.append_event(event.clone()) {
                Ok(AppendOutcome::Applied(ids)) => report.applied.extend(ids),
                Ok(AppendOutcome::Parked(_)) | Ok(AppendOutcome::Duplicate) => {}
                Err(e) => report.rejected.push((event.event_id, e)),
            }
        }
        report.parked = self.parked.len();
        report
    }

    /// Winner per `(event_type, state_key)` is the state event with the
    /// greatest `(depth, event_id)`.
    pub fn resolve_state(&self) -> StateMap {
        let mut best: BTreeMap<(String, String), (u64, EventId)> = BTreeMap::new();
        for event in self.events.values() {
            if let Some((t, k)) = event.state_slot() {
                let cand = (event.depth, event.event_id);
                let slot = best.entry((t.to_string(), k.to_string())).or_insert(cand);
                if cand > *slot {
                    *slot = cand;
                }
            }
        }
        StateMap(best.into_iter().map(|(k, (_, id))| (k, id)).collect())
    }
}

const TRANSCRIPT_MAGIC: &str = "sendnet-room-transcript v1";

/// A transcript is a header line `sendnet-room-transcript v1 <room hex>
/// <count>` followed by one hex-encoded event per line in topological
/// order.
pub fn write_transcript(dag: &RoomDag) -> String {
    let events = dag.topological();
    let mut out = format!(
        "{TRANSCRIPT_MAGIC} {} {}\n",
        hex::encode(dag.room_id),
        events.len()
    );
    for e in events {
        out.push_str(&hex::encode(e.to_bytes()));
        out.push('\n');
    }
    out
}

pub fn read_transcript(text: &str) -> Result<(RoomId, Vec<RoomEvent>), DecodeError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(DecodeError::invalid("transcript header"))?;
    let rest = header
        .strip_prefix(TRANSCRIPT_MAGIC)
        .ok_or(DecodeError::invalid("transcript header"))?;
    let mut fields = rest.split_whitespace();
    let room: RoomId = fields
        .next()
        .and_then(|h| hex::decode(h).ok())
        .and_then(|b| b.try_into().ok())
        .ok_or(DecodeError::invalid("transcript room id"))?;
    let count: usize = fields
        .next()
        .and_then(|c| c.parse().ok())
        .ok_or(DecodeError::invalid("transcript count"))?;
    let events = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            hex::decode(l)
                .map_err(|_| DecodeError::invalid("transcript hex"))
                .and_then(|b| RoomEvent::from_bytes(&b))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if events.len() != count {
        return Err(DecodeError::invalid("transcript count"));
    }
    Ok((room, events))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    const ROOM: RoomId = [3u8; 32];

    fn key(i: u8) -> KeyPair {
        KeyPair::from_seed(&[i])
    }

    fn topic(dag: &RoomDag, signer: &KeyPair, text: &str) -> RoomEvent {
        dag.create_event(
            signer,
            EventKind::State {
                event_type: "m.room.topic".into(),
                state_key: String::new(),
            },
            text.as_bytes().to_vec(),
        )
    }

    #[test]
    fn create_event_becomes_only_extremity() {
        let mut dag = RoomDag::new(ROOM);
        let create = dag.create_event(&key(1), EventKind::Message, b"create".to_vec());
        assert_eq!(create.depth, 1);
        dag.append_event(create.clone()).unwrap();
        assert_eq!(dag.forward_extremities(), &BTreeSet::from([create.event_id]));
        assert_eq!(dag.append_event(create).unwrap(), AppendOutcome::Duplicate);
        assert_eq!(dag.len(), 1);
    }

    #[test]
    fn fork_has_two_extremities_and_tie_breaks_on_id() {
        let mut dag = RoomDag::new(ROOM);
        let root = dag.create_event(&key(1), EventKind::Message, b"root".to_vec());
        dag.append_event(root).unwrap();
        let a = topic(&dag, &key(1), "a");
        let b = topic(&dag, &key(2), "b");
        assert_eq!(a.depth, b.depth);
        for order in [[&a, &b], [&b, &a]] {
            let mut replica = dag.clone();
            for e in order {
                replica.append_event(e.clone()).unwrap();
            }
            assert_eq!(replica.forward_extremities().len(), 2);
            let winner = a.event_id.max(b.event_id);
            assert_eq!(replica.resolve_state().get("m.room.topic", ""), Some(&winner));
        }
    }

    #[test]
    fn linear_chain_last_state_wins() {
        let mut dag = RoomDag::new(ROOM);
        let mut last = None;
        for i in 0..5 {
            let e = topic(&dag, &key(1), &format!("t{i}"));
            last = Some(e.event_id);
            dag.append_event(e).unwrap();
        }
        assert_eq!(dag.resolve_state().get("m.room.topic", ""), last.as_ref());
    }

    #[test]
    fn child_before_parent_is_parked_then_applied() {
        let mut dag = RoomDag::new(ROOM);
        let root = dag.create_event(&key(1), EventKind::Message, b"r".to_vec());
        let mut source = RoomDag::new(ROOM);
        source.append_event(root.clone()).unwrap();
        let child = source.create_event(&key(2), EventKind::Message, b"c".to_vec());
        assert_eq!(
            dag.append_event(child.clone()).unwrap(),
            AppendOutcome::Parked(vec![root.event_id])
        );
        assert_eq!(dag.missing(), vec![root.event_id]);
        assert_eq!(
            dag.append_event(root.clone()).unwrap(),
            AppendOutcome::Applied(vec![root.event_id, child.event_id])
        );
        assert_eq!(dag.parked_len(), 0);
        assert_eq!(dag.forward_extremities(), &BTreeSet::from([child.event_id]));
    }

    #[test]
    fn forged_depth_rejected() {
        let mut dag = RoomDag::new(ROOM);
        let root = dag.create_event(&key(1), EventKind::Message, b"r".to_vec());
        dag.append_event(root.clone()).unwrap();
        let deep = RoomEvent::new(&key(1), ROOM, EventKind::Message, vec![], vec![root.event_id], 9);
        assert_eq!(
            dag.append_event(deep).unwrap_err(),
            DagError::DepthMismatch {
                claimed: 9,
                expected: 2
            }
        );
        let shallow = RoomEvent::new(&key(1), ROOM, EventKind::Message, vec![], vec![root.event_id], 1);
        assert_eq!(dag.append_event(shallow).unwrap_err(), DagError::Cycle);
    }

    #[test]
    fn bad_signature_and_id_rejected() {
        let mut dag = RoomDag::new(ROOM);
        let mut e = dag.create_event(&key(1), EventKind::Message, b"r".to_vec());
        e.signature = key(2).sign(&e.event_id).to_bytes();
        assert_eq!(dag.append_event(e.clone()).unwrap_err(), DagError::BadSignature);
        e.content.push(0);
        assert_eq!(dag.append_event(e).unwrap_err(), DagError::IdMismatch);
        assert!(dag.merge_remote(&[]).applied.is_empty());
    }

    fn random_history(seed: u64, n: usize) -> Vec<RoomEvent> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let signers: Vec<KeyPair> = (0..4).map(key).collect();
        let mut all: Vec<RoomEvent> = Vec::new();
        let mut depth_of = BTreeMap::new();
        for i in 0..n {
            let parents: Vec<EventId> = if all.is_empty() {
                vec![]
            } else {
                (0..rng.gen_range(1..=2))
                    .map(|_| all[rng.gen_range(all.len().saturating_sub(6)..all.len())].event_id)
                    .collect()
            };
            let depth = 1 + parents.iter().map(|p| depth_of[p]).max().unwrap_or(0);
            let kind = if rng.gen_bool(0.5) {
                EventKind::State {
                    event_type: ["m.room.topic", "m.room.name"][rng.gen_range(0..2)].into(),
                    state_key: format!("{}", rng.gen_range(0..3)),
                }
            } else {
                EventKind::Message
            };
            let e = RoomEvent::new(
                &signers[i % 4],
                ROOM,
                kind,
                format!("e{i}").into_bytes(),
                parents,
                depth,
            );
            depth_of.insert(e.event_id, depth);
            all.push(e);
        }
        all
    }

    #[test]
    fn delivery_order_does_not_change_state() {
        let events = random_history(11, 60);
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let mut reference: Option<(Vec<u8>, BTreeSet<EventId>)> = None;
        for _ in 0..4 {
            let mut order = events.clone();
            order.shuffle(&mut rng);
            let mut dag = RoomDag::new(ROOM);
            let report = dag.merge_remote(&order);
            assert!(report.rejected.is_empty());
            assert_eq!(dag.len(), events.len());
            let got = (dag.resolve_state().to_bytes(), dag.forward_extremities().clone());
            match &reference {
                None => reference = Some(got),
                Some(r) => assert_eq!(r, &got),
            }
        }
    }

    #[test]
    fn disjoint_replicas_converge_after_sync() {
        let events = random_history(13, 40);
        let mut a = RoomDag::new(ROOM);
        let mut b = RoomDag::new(ROOM);
        a.merge_remote(&events[..25]);
        b.merge_remote(&events[10..]);
        // b cannot apply most of its events until it backfills from a
        assert!(b.parked_len() > 0);
        let a_events: Vec<RoomEvent> = a.topological().into_iter().cloned().collect();
        b.merge_remote(&a_events);
        assert_eq!(b.parked_len(), 0);
        let b_events: Vec<RoomEvent> = b.topological().into_iter().cloned().collect();
        a.merge_remote(&b_events);
        assert_eq!(a.len(), 40);
        assert_eq!(b.len(), 40);
        assert_eq!(a.resolve_state(), b.resolve_state());
        assert_eq!(a.forward_extremities(), b.forward_extremities());
    }

    #[test]
    fn transcript_round_trip() {
        let events = random_history(14, 12);
        let mut dag = RoomDag::new(ROOM);
        dag.merge_remote(&events);
        let text = write_transcript(&dag);
        let (room, back) = read_transcript(&text).unwrap();
        assert_eq!(room, ROOM);
        let mut replay = RoomDag::new(room);
        replay.merge_remote(&back);
        assert_eq!(write_transcript(&replay), text);
        assert!(read_transcript("nonsense\n").is_err());
    }
}
