use std::collections::{BTreeMap, BTreeSet};

use crate::codec::{DecodeError, Reader, Writer};
use crate::group_crypto::RoomId;
use crate::hash::{sha256, Digest32};
use crate::identity::{self, Address, KeyPair, SIGNATURE_BYTES};
use crate::pairing::{GroupElement, GROUP_BYTES};
use crate::room_state::EventId;

use super::PorError;

pub type PublicBytes = [u8; GROUP_BYTES];
pub type SignatureBytes = [u8; SIGNATURE_BYTES];

/// The room member list as seen by relays: addresses of the client nodes
/// hosting members of the room.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Membership {
    pub room_id: RoomId,
    pub nodes: BTreeSet<Address>,
}

impl Membership {
    pub fn new(room_id: RoomId, nodes: impl IntoIterator<Item = Address>) -> Self {
        Membership {
            room_id,
            nodes: nodes.into_iter().collect(),
        }
    }

    pub fn contains_key(&self, key: &PublicBytes) -> bool {
        GroupElement::from_bytes(key).is_ok_and(|pk| self.nodes.contains(&Address::of(&pk)))
    }
}

/// The relay's endorsement of the outbound-signed body.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Endorsement {
    pub relay: PublicBytes,
    pub next_hop: PublicBytes,
    pub sig_relay: SignatureBytes,
}

/// One hop of the chained signature: `signer` signs
/// `H(event_id ‖ previous signature ‖ next_hop)`. Hop 0's previous
/// signature is `sig_out`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainLink {
    pub hop_index: u32,
    pub signer: PublicBytes,
    pub next_hop: PublicBytes,
    pub signature: SignatureBytes,
}

/// Encoding:
///
/// ```text
/// frame(room_id) frame(event_id) u64 message_size frame(outbound)   -- outbound body
/// frame(sig_out) frame(payload)
/// u8 endorsed [frame(relay) frame(next_hop) frame(sig_relay)]
/// u32 hops (u32 hop_index frame(signer) frame(next_hop) frame(signature))*
/// ```
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelayEnvelope {
    pub room_id: RoomId,
    pub event_id: EventId,
    pub message_size: u64,
    pub outbound: PublicBytes,
    pub sig_out: SignatureBytes,
    pub payload: Vec<u8>,
    pub endorsement: Option<Endorsement>,
    pub chain: Vec<ChainLink>,
}

fn verify_sig(key: &PublicBytes, digest: &Digest32, sig: &SignatureBytes) -> bool {
    GroupElement::from_bytes(key).is_ok_and(|pk| identity::verify_event(&pk, digest, sig))
}

pub(crate) fn chain_digest(event_id: &EventId, prev_sig: &SignatureBytes, next_hop: &PublicBytes) -> Digest32 {
    sha256(&[b"por-chain", event_id, prev_sig, next_hop])
}

impl RelayEnvelope {
    /// The body `sig_out` covers: room, event id, size and outbound key.
    pub fn outbound_body(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.frame(&self.room_id)
            .frame(&self.event_id)
            .u64(self.message_size)
            .frame(&self.outbound);
        w.finish()
    }

    pub fn outbound_digest(&self) -> Digest32 {
        sha256(&[b"por-out", &self.outbound_body()])
    }

    /// `sig_relay` covers the outbound body, `sig_out` and the next hop.
    pub fn relay_digest(&self, next_hop: &PublicBytes) -> Digest32 {
        relay_digest(&self.outbound_body(), &self.sig_out, next_hop)
    }

    pub fn verify_outbound(&self) -> bool {
        verify_sig(&self.outbound, &self.outbound_digest(), &self.sig_out)
    }

    /// Checks every link of the hop chain and returns the signer expected
    /// next (the last link's `next_hop`), or `None` for an empty chain.
    pub fn verify_chain(&self) -> Result<Option<PublicBytes>, PorError> {
        let mut prev = self.sig_out;
        let mut expected: Option<PublicBytes> = None;
        for (k, link) in self.chain.iter().enumerate() {
            if link.hop_index as usize != k || expected.is_some_and(|e| e != link.signer) {
                return Err(PorError::BadChain { hop: k });
            }
            let digest = chain_digest(&self.event_id, &prev, &link.next_hop);
            if !verify_sig(&link.signer, &digest, &link.signature) {
                return Err(PorError::BadChain { hop: k });
            }
            prev = link.signature;
            expected = Some(link.next_hop);
        }
        Ok(expected)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.outbound_body())
            .frame(&self.sig_out)
            .frame(&self.payload);
        match &self.endorsement {
            None => {
                w.u8(0);
            }
            Some(e) => {
                w.u8(1).frame(&e.relay).frame(&e.next_hop).frame(&e.sig_relay);
            }
        }
        w.u32(self.chain.len() as u32);
        for link in &self.chain {
            w.u32(link.hop_index)
                .frame(&link.signer)
                .frame(&link.next_hop)
                .frame(&link.signature);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<RelayEnvelope, DecodeError> {
        let mut r = Reader::new(bytes);
        let room_id = fixed(r.frame()?, "room id")?;
        let event_id = fixed(r.frame()?, "event id")?;
        let message_size = r.u64()?;
        let outbound = fixed(r.frame()?, "outbound key")?;
        let sig_out = fixed(r.frame()?, "sig_out")?;
        let payload = r.frame()?.to_vec();
        let endorsement = match r.u8()? {
            0 => None,
            1 => Some(Endorsement {
                relay: fixed(r.frame()?, "relay key")?,
                next_hop: fixed(r.frame()?, "next hop")?,
                sig_relay: fixed(r.frame()?, "sig_relay")?,
            }),
            _ => return Err(DecodeError::invalid("endorsement flag")),
        };
        let hops = r.u32()? as usize;
        let mut chain = Vec::with_capacity(hops.min(64));
        for _ in 0..hops {
            chain.push(ChainLink {
                hop_index: r.u32()?,
                signer: fixed(r.frame()?, "hop signer")?,
                next_hop: fixed(r.frame()?, "hop next")?,
                signature: fixed(r.frame()?, "hop signature")?,
            });
        }
        r.finish()?;
        Ok(RelayEnvelope {
            room_id,
            event_id,
            message_size,
            outbound,
            sig_out,
            payload,
            endorsement,
            chain,
        })
    }
}

pub(crate) fn relay_digest(outbound_body: &[u8], sig_out: &SignatureBytes, next_hop: &PublicBytes) -> Digest32 {
    sha256(&[b"por-relay", outbound_body, sig_out, next_hop])
}

pub(crate) fn fixed<const N: usize>(bytes: &[u8], what: &'static str) -> Result<[u8; N], DecodeError> {
    bytes.try_into().map_err(|_| DecodeError::invalid(what))
}

/// Step 1: the outbound node signs `(event_id, message_size)`.
pub fn assemble_outbound(
    room_id: RoomId,
    event_id: EventId,
    payload: Vec<u8>,
    outbound: &KeyPair,
) -> Result<RelayEnvelope, PorError> {
    if payload.is_empty() {
        return Err(PorError::EmptyPayload);
    }
    let mut env = RelayEnvelope {
        room_id,
        event_id,
        message_size: payload.len() as u64,
        outbound: outbound.public().to_bytes(),
        sig_out: [0; SIGNATURE_BYTES],
        payload,
        endorsement: None,
        chain: Vec::new(),
    };
    env.sig_out = outbound.sign(&env.outbound_digest()).to_bytes();
    Ok(env)
}

/// Step 2: a relay checks the member list, the outbound signature and any
/// earlier hops, then endorses the body and appends its chain link.
pub fn relay_endorse(
    envelope: &RelayEnvelope,
    membership: &Membership,
    relay: &KeyPair,
    next_hop: &PublicBytes,
) -> Result<RelayEnvelope, PorError> {
    if envelope.room_id != membership.room_id || !membership.contains_key(&envelope.outbound) {
        return Err(PorError::NotAMember);
    }
    if envelope.message_size != envelope.payload.len() as u64 {
        return Err(PorError::SizeMismatch);
    }
    if !envelope.verify_outbound() {
        return Err(PorError::BadOutboundSignature);
    }
    let relay_pk = relay.public().to_bytes();
    if let Some(expected) = envelope.verify_chain()? {
        if expected != relay_pk {
            return Err(PorError::WrongNextHop);
        }
    }
    let prev = envelope.chain.last().map_or(envelope.sig_out, |l| l.signature);
    let mut out = envelope.clone();
    out.endorsement = Some(Endorsement {
        relay: relay_pk,
        next_hop: *next_hop,
        sig_relay: relay.sign(&envelope.relay_digest(next_hop)).to_bytes(),
    });
    out.chain.push(ChainLink {
        hop_index: envelope.chain.len() as u32,
        signer: relay_pk,
        next_hop: *next_hop,
        signature: relay
            .sign(&chain_digest(&envelope.event_id, &prev, next_hop))
            .to_bytes(),
    });
    Ok(out)
}

/// A leaf accepted by an inbound node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Leaf {
    pub event_id: EventId,
    pub message_size: u64,
}

/// Receipts are issued per `(outbound node, relay)` pair.
pub type BatchKey = (Address, PublicBytes);

/// Pending leaves at one inbound node.
#[derive(Clone, Debug)]
pub struct InboundBatch {
    inbound: PublicBytes,
    pending: BTreeMap<BatchKey, BTreeMap<EventId, u64>>,
    opened_at: BTreeMap<BatchKey, u64>,
    seen: BTreeSet<EventId>,
}

impl InboundBatch {
    pub fn new(inbound: &GroupElement) -> Self {
        InboundBatch {
            inbound: inbound.to_bytes(),
            pending: BTreeMap::new(),
            opened_at: BTreeMap::new(),
            seen: BTreeSet::new(),
        }
    }

    pub fn inbound(&self) -> &PublicBytes {
        &self.inbound
    }

    pub fn pending(&self, key: &BatchKey) -> usize {
        self.pending.get(key).map_or(0, BTreeMap::len)
    }

    pub fn opened_at(&self, key: &BatchKey) -> Option<u64> {
        self.opened_at.get(key).copied()
    }

    pub fn keys(&self) -> Vec<BatchKey> {
        self.pending.keys().copied().collect()
    }

    pub(crate) fn take(&mut self, key: &BatchKey) -> Vec<(EventId, u64)> {
        self.opened_at.remove(key);
        self.pending
            .remove(key)
            .map(|m| m.into_iter().collect())
            .unwrap_or_default()
    }
}

/// Step 3: the inbound node checks membership, both signatures and the
/// hop chain, rejects replays, and stores the leaf.
pub fn inbound_accept(
    envelope: &RelayEnvelope,
    membership: &Membership,
    batch: &mut InboundBatch,
    now: u64,
) -> Result<Leaf, PorError> {
    if envelope.room_id != membership.room_id
        || !membership.contains_key(&envelope.outbound)
        || !membership.contains_key(&batch.inbound)
    {
        return Err(PorError::NotAMember);
    }
    if envelope.message_size != envelope.payload.len() as u64 {
        return Err(PorError::SizeMismatch);
    }
    if !envelope.verify_outbound() {
        return Err(PorError::BadOutboundSignature);
    }
    let endorsement = envelope
        .endorsement
        .as_ref()
        .ok_or(PorError::MissingRelaySignature)?;
    if endorsement.next_hop != batch.inbound {
        return Err(PorError::WrongNextHop);
    }
    if !verify_sig(
        &endorsement.relay,
        &envelope.relay_digest(&endorsement.next_hop),
        &endorsement.sig_relay,
    ) {
        return Err(PorError::BadRelaySignature);
    }
    let last_signer = envelope.chain.last().map(|l| l.signer);
    match envelope.verify_chain()? {
        Some(next) if next == batch.inbound && last_signer == Some(endorsement.relay) => {}
        _ => {
            return Err(PorError::BadChain {
                hop: envelope.chain.len().saturating_sub(1),
            })
        }
    }
    if !batch.seen.insert(envelope.event_id) {
        return Err(PorError::Replay(hex::encode(envelope.event_id)));
    }
    let outbound = Address::of(&GroupElement::from_bytes(&envelope.outbound).expect("verified above"));
    let key = (outbound, endorsement.relay);
    batch.opened_at.entry(key).or_insert(now);
    batch
        .pending
        .entry(key)
        .or_default()
        .insert(envelope.event_id, envelope.message_size);
    Ok(Leaf {
        event_id: envelope.event_id,
        message_size: envelope.message_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) struct Cast {
        pub out: KeyPair,
        pub relay: KeyPair,
        pub relay2: KeyPair,
        pub inbound: KeyPair,
        pub members: Membership,
    }

    pub(crate) fn cast() -> Cast {
        let out = KeyPair::from_seed(b"out");
        let inbound = KeyPair::from_seed(b"in");
        Cast {
            members: Membership::new([5; 32], [out.address(), inbound.address()]),
            out,
            relay: KeyPair::from_seed(b"relay"),
            relay2: KeyPair::from_seed(b"relay2"),
            inbound,
        }
    }

    fn envelope(c: &Cast, i: u8) -> RelayEnvelope {
        assemble_outbound([5; 32], [i; 32], vec![i; 10 + i as usize], &c.out).unwrap()
    }

    #[test]
    fn assemble_is_deterministic_and_verifies() {
        let c = cast();
        let a = envelope(&c, 1);
        assert!(a.verify_outbound());
        assert_eq!(a.to_bytes(), envelope(&c, 1).to_bytes());
        assert_eq!(RelayEnvelope::from_bytes(&a.to_bytes()).unwrap(), a);
        assert_eq!(
            assemble_outbound([5; 32], [1; 32], vec![], &c.out).unwrap_err(),
            PorError::EmptyPayload
        );
    }

    #[test]
    fn honest_hop_is_accepted() {
        let c = cast();
        let env = relay_endorse(&envelope(&c, 1), &c.members, &c.relay, &c.inbound.public().to_bytes()).unwrap();
        let mut batch = InboundBatch::new(&c.inbound.public());
        let leaf = inbound_accept(&env, &c.members, &mut batch, 0).unwrap();
        assert_eq!(leaf.message_size, 11);
        assert_eq!(batch.pending(&(c.out.address(), c.relay.public().to_bytes())), 1);
        assert!(matches!(
            inbound_accept(&env, &c.members, &mut batch, 0),
            Err(PorError::Replay(_))
        ));
    }

    #[test]
    fn size_tamper_caught_by_relay() {
        let c = cast();
        let mut env = envelope(&c, 2);
        env.message_size += 1;
        assert_eq!(
            relay_endorse(&env, &c.members, &c.relay, &c.inbound.public().to_bytes()).unwrap_err(),
            PorError::SizeMismatch
        );
        env.payload.push(0);
        assert_eq!(
            relay_endorse(&env, &c.members, &c.relay, &c.inbound.public().to_bytes()).unwrap_err(),
            PorError::BadOutboundSignature
        );
    }

    #[test]
    fn non_member_sender_rejected() {
        let c = cast();
        let stranger = KeyPair::from_seed(b"stranger");
        let env = assemble_outbound([5; 32], [3; 32], vec![1], &stranger).unwrap();
        assert_eq!(
            relay_endorse(&env, &c.members, &c.relay, &c.inbound.public().to_bytes()).unwrap_err(),
            PorError::NotAMember
        );
    }

    #[test]
    fn stripped_endorsement_is_a_downgrade() {
        let c = cast();
        let mut env = relay_endorse(&envelope(&c, 4), &c.members, &c.relay, &c.inbound.public().to_bytes()).unwrap();
        env.endorsement = None;
        let mut batch = InboundBatch::new(&c.inbound.public());
        assert_eq!(
            inbound_accept(&env, &c.members, &mut batch, 0).unwrap_err(),
            PorError::MissingRelaySignature
        );
    }

    #[test]
    fn two_hop_chain_verifies_and_theft_fails() {
        let c = cast();
        let inbound = c.inbound.public().to_bytes();
        let hop1 = relay_endorse(&envelope(&c, 5), &c.members, &c.relay, &c.relay2.public().to_bytes()).unwrap();
        let hop2 = relay_endorse(&hop1, &c.members, &c.relay2, &inbound).unwrap();
        let mut batch = InboundBatch::new(&c.inbound.public());
        inbound_accept(&hop2, &c.members, &mut batch, 0).unwrap();

        // relay2 claims hop 0 by copying relay's chain signature
        let mut stolen = hop2.clone();
        stolen.chain[0].signer = c.relay2.public().to_bytes();
        let mut batch = InboundBatch::new(&c.inbound.public());
        assert!(matches!(
            inbound_accept(&stolen, &c.members, &mut batch, 0),
            Err(PorError::BadChain { .. })
        ));

        // a third node not named as next hop cannot join the chain
        let thief = KeyPair::from_seed(b"thief");
        assert_eq!(
            relay_endorse(&hop1, &c.members, &thief, &inbound).unwrap_err(),
            PorError::WrongNextHop
        );
    }
}
