use std::collections::{BTreeMap, BTreeSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::codec::Writer;
use crate::hash::{sha256, Digest32};
use crate::identity::{self, KeyPair};
use crate::pairing::{fixed_base_mul, GroupElement, GROUP_BYTES};

use super::envelope::{CipherEnvelope, EnvelopeMode, RoomId};
use super::session::{
    group_decrypt, group_encrypt, ratchet_decrypt, ratchet_encrypt, GroupKey, KeyId, Keychain,
    PairwiseSession,
};
use super::{open, seal, CryptoError};

pub type MemberId = u32;

/// Rooms with more members than this switch to a shared group key.
pub const DEFAULT_GROUP_THRESHOLD: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoomMode {
    Pairwise,
    Group,
}

impl RoomMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RoomMode::Pairwise => "pairwise",
            RoomMode::Group => "group",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExchangeKind {
    /// Key confirmation for a freshly derived pairwise session. The sealed
    /// payload is the sender's ratchet public key.
    Session,
    /// Distribution of a group key. The sealed payload is the key.
    GroupKey { key_id: KeyId },
}

/// A directed key-exchange message, sealed under the pairwise session
/// between `from` and `to`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyExchange {
    pub room_id: RoomId,
    pub epoch: u64,
    pub from: MemberId,
    pub to: MemberId,
    pub kind: ExchangeKind,
    pub sealed: Vec<u8>,
}

impl KeyExchange {
    fn aad(room_id: &RoomId, epoch: u64, from: MemberId, to: MemberId, kind: &ExchangeKind) -> Vec<u8> {
        let mut w = Writer::new();
        w.frame(room_id).u64(epoch).u32(from).u32(to);
        match kind {
            ExchangeKind::Session => {
                w.u8(0);
            }
            ExchangeKind::GroupKey { key_id } => {
                w.u8(1).frame(key_id);
            }
        }
        w.finish()
    }

    fn nonce(aad: &[u8]) -> [u8; 12] {
        sha256(&[b"kx-nonce", aad])[..12].try_into().unwrap()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExchangeCounters {
    /// Directed session key-exchange messages (pairwise mode).
    pub pairwise_exchange: u64,
    /// Group key distribution messages (group mode).
    pub group_distribution: u64,
    /// Signed ratchet key publications, one per member per reset.
    pub prekey_announcements: u64,
    pub resets: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResetNotice {
    pub epoch: u64,
    pub mode: RoomMode,
    pub removed: Vec<MemberId>,
    pub added: Vec<MemberId>,
    /// Messages emitted by the reset itself. Group mode rekeys lazily on
    /// the next send, so this is zero there.
    pub exchange_messages: u64,
}

/// Everything one member holds for a room.
#[derive(Clone, Debug)]
pub struct MemberState {
    id: MemberId,
    device: KeyPair,
    ratchet: KeyPair,
    ratchet_pub: [u8; GROUP_BYTES],
    sessions: BTreeMap<MemberId, PairwiseSession>,
    group_keys: BTreeMap<KeyId, GroupKey>,
    active: Option<KeyId>,
    group_index: u64,
    // every chain and group key this member was ever given
    held_chains: Vec<Keychain>,
    held_group_keys: Vec<GroupKey>,
}

impl MemberState {
    fn new(id: MemberId, device: KeyPair, ratchet: KeyPair) -> Self {
        MemberState {
            id,
            device,
            ratchet_pub: ratchet.public().to_bytes(),
            ratchet,
            sessions: BTreeMap::new(),
            group_keys: BTreeMap::new(),
            active: None,
            group_index: 0,
            held_chains: Vec::new(),
            held_group_keys: Vec::new(),
        }
    }

    pub fn id(&self) -> MemberId {
        self.id
    }

    pub fn device_public(&self) -> GroupElement {
        self.device.public()
    }

    pub fn ratchet_public(&self) -> &[u8; GROUP_BYTES] {
        &self.ratchet_pub
    }

    pub fn session(&self, peer: MemberId) -> Option<&PairwiseSession> {
        self.sessions.get(&peer)
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    pub fn active_key(&self) -> Option<&GroupKey> {
        self.active.and_then(|id| self.group_keys.get(&id))
    }

    pub fn group_key_ids(&self) -> impl Iterator<Item = &KeyId> {
        self.group_keys.keys()
    }

    fn install_session(&mut self, peer: MemberId, session: PairwiseSession) {
        self.held_chains.push(session.send_chain().clone());
        self.held_chains.push(session.recv_chain().clone());
        self.sessions.insert(peer, session);
    }

    fn install_group_key(&mut self, key: GroupKey) {
        self.held_group_keys.push(key.clone());
        self.active.get_or_insert(key.key_id);
        self.group_keys.insert(key.key_id, key);
    }

    fn reset(&mut self, ratchet: KeyPair) {
        self.ratchet_pub = ratchet.public().to_bytes();
        self.ratchet = ratchet;
        self.sessions.clear();
        self.group_keys.clear();
        self.active = None;
        self.group_index = 0;
    }

    /// True iff any key this member ever held opens `envelope`: every group
    /// key regardless of id, and every chain it was given stepped forward
    /// past the envelope's index.
    pub fn could_decrypt(&self, envelope: &CipherEnvelope) -> bool {
        let aad = envelope.aad();
        let try_key = |k: &Digest32| open(k, &envelope.nonce, &aad, &envelope.ciphertext).is_ok();
        if self.held_group_keys.iter().any(|g| try_key(&g.key)) {
            return true;
        }
        self.held_chains.iter().any(|chain| {
            let mut c = chain.clone();
            (0..=envelope.index()).any(|_| try_key(&c.step().1))
        })
    }
}

/// Key state for every member of one room.
///
/// The simulator owns all members, so exchanges are sealed by the sender
/// and opened by the recipient in-process. Ratchet key pairs are
/// regenerated at every membership change and published with a device
/// signature.
#[derive(Clone, Debug)]
pub struct RoomCrypto {
    room_id: RoomId,
    threshold: usize,
    epoch: u64,
    members: BTreeMap<MemberId, MemberState>,
    by_device: BTreeMap<[u8; GROUP_BYTES], MemberId>,
    departed: BTreeMap<MemberId, MemberState>,
    counters: ExchangeCounters,
    rng: ChaCha20Rng,
}

impl RoomCrypto {
    /// Creates the room and performs the initial key exchange for its mode.
    pub fn new(room_name: &str, members: &[(MemberId, KeyPair)], threshold: usize, seed: u64) -> Self {
        let mut room = RoomCrypto {
            room_id: sha256(&[b"room", room_name.as_bytes()]),
            threshold,
            epoch: 0,
            members: BTreeMap::new(),
            by_device: BTreeMap::new(),
            departed: BTreeMap::new(),
            counters: ExchangeCounters::default(),
            rng: ChaCha20Rng::seed_from_u64(seed),
        };
        for (id, device) in members {
            let ratchet = KeyPair::generate(&mut room.rng);
            room.by_device.insert(device.public().to_bytes(), *id);
            room.members.insert(*id, MemberState::new(*id, *device, ratchet));
        }
        room.publish_prekeys();
        if room.mode() == RoomMode::Pairwise {
            room.rekey_pairwise();
        }
        room
    }

    pub fn room_id(&self) -> &RoomId {
        &self.room_id
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn mode(&self) -> RoomMode {
        if self.members.len() > self.threshold {
            RoomMode::Group
        } else {
            RoomMode::Pairwise
        }
    }

    pub fn counters(&self) -> &ExchangeCounters {
        &self.counters
    }

    pub fn member(&self, id: MemberId) -> Option<&MemberState> {
        self.members.get(&id)
    }

    pub fn member_ids(&self) -> impl Iterator<Item = MemberId> + '_ {
        self.members.keys().copied()
    }

    /// State of a member at the moment it left.
    pub fn departed(&self, id: MemberId) -> Option<&MemberState> {
        self.departed.get(&id)
    }

    fn publish_prekeys(&mut self) {
        for m in self.members.values() {
            let digest = prekey_digest(&self.room_id, self.epoch, m.id, &m.ratchet_pub);
            let sig = m.device.sign(&digest);
            // the registry checks each publication once; members trust it
            debug_assert!(identity::verify(&m.device.public(), &digest, &sig));
            self.counters.prekey_announcements += 1;
        }
    }

    /// Fresh sessions for every ordered member pair; one key-exchange
    /// message per ordered pair. Returns the number of messages.
    ///
    /// The DH value of each unordered pair is computed once, with one
    /// fixed-base table per ratchet public key.
    pub fn rekey_pairwise(&mut self) -> u64 {
        let ids: Vec<MemberId> = self.members.keys().copied().collect();
        let states: Vec<&MemberState> = self.members.values().collect();
        let secrets: Vec<_> = states.iter().map(|m| m.ratchet.secret()).collect();
        let pubs: Vec<_> = states.iter().map(|m| m.ratchet.public()).collect();
        let pub_bytes: Vec<[u8; GROUP_BYTES]> = states.iter().map(|m| m.ratchet_pub).collect();

        let mut installs: Vec<(usize, MemberId, PairwiseSession)> = Vec::new();
        let mut sent = 0u64;
        for j in 1..ids.len() {
            let shared = fixed_base_mul(&pubs[j], &secrets[..j]);
            for (i, dh) in shared.iter().enumerate() {
                let dh = dh.to_bytes();
                let at_i = PairwiseSession::from_shared(&dh, pub_bytes[i], pub_bytes[j]);
                let at_j = PairwiseSession::from_shared(&dh, pub_bytes[j], pub_bytes[i]);
                for (from, to, sender_view, receiver_view) in
                    [(i, j, &at_i, &at_j), (j, i, &at_j, &at_i)]
                {
                    let msg = self.seal_exchange(
                        ids[from],
                        ids[to],
                        ExchangeKind::Session,
                        sender_view,
                        &pub_bytes[from],
                    );
                    sent += 1;
                    let payload = self
                        .open_exchange(&msg, receiver_view)
                        .expect("honest key confirmation opens");
                    debug_assert_eq!(payload, pub_bytes[from]);
                }
                installs.push((i, ids[j], at_i));
                installs.push((j, ids[i], at_j));
            }
        }
        for (idx, peer, session) in installs {
            self.members
                .get_mut(&ids[idx])
                .expect("member index")
                .install_session(peer, session);
        }
        self.counters.pairwise_exchange += sent;
        sent
    }

    fn seal_exchange(
        &self,
        from: MemberId,
        to: MemberId,
        kind: ExchangeKind,
        session: &PairwiseSession,
        payload: &[u8],
    ) -> KeyExchange {
        let aad = KeyExchange::aad(&self.room_id, self.epoch, from, to, &kind);
        KeyExchange {
            room_id: self.room_id,
            epoch: self.epoch,
            from,
            to,
            kind,
            sealed: seal(&session.wrap_key(), &KeyExchange::nonce(&aad), &aad, payload),
        }
    }

    fn open_exchange(&self, msg: &KeyExchange, session: &PairwiseSession) -> Result<Vec<u8>, CryptoError> {
        let aad = KeyExchange::aad(&msg.room_id, msg.epoch, msg.from, msg.to, &msg.kind);
        open(&session.wrap_key(), &KeyExchange::nonce(&aad), &aad, &msg.sealed)
    }

    /// Session view of `me` towards `peer`, derived from the published
    /// ratchet keys.
    fn derive_session(&self, me: MemberId, peer: MemberId) -> Result<PairwiseSession, CryptoError> {
        let m = self.members.get(&me).ok_or(CryptoError::UnknownMember(me))?;
        let p = self.members.get(&peer).ok_or(CryptoError::UnknownMember(peer))?;
        let dh = p.ratchet.public() * m.ratchet.secret();
        Ok(PairwiseSession::from_shared(&dh.to_bytes(), m.ratchet_pub, p.ratchet_pub))
    }

    /// Creates a fresh group key at `initiator` and seals one copy for every
    /// other member. Sessions the initiator lacks are derived on the spot.
    /// The messages still have to be passed to [`RoomCrypto::deliver`].
    pub fn rekey_group(&mut self, initiator: MemberId) -> Result<(GroupKey, Vec<KeyExchange>), CryptoError> {
        if !self.members.contains_key(&initiator) {
            return Err(CryptoError::UnknownMember(initiator));
        }
        let mut key_id = [0u8; 16];
        let mut key = [0u8; 32];
        self.rng.fill_bytes(&mut key_id);
        self.rng.fill_bytes(&mut key);
        let group_key = GroupKey {
            key_id,
            key,
            epoch: self.epoch,
        };
        let peers: Vec<MemberId> = self.members.keys().copied().filter(|&m| m != initiator).collect();
        let mut messages = Vec::with_capacity(peers.len());
        for peer in peers {
            let existing = self.members[&initiator].sessions.get(&peer).cloned();
            let session = match existing {
                Some(s) => s,
                None => {
                    let s = self.derive_session(initiator, peer)?;
                    self.members
                        .get_mut(&initiator)
                        .unwrap()
                        .install_session(peer, s.clone());
                    s
                }
            };
            messages.push(self.seal_exchange(
                initiator,
                peer,
                ExchangeKind::GroupKey { key_id },
                &session,
                &key,
            ));
        }
        self.counters.group_distribution += messages.len() as u64;
        self.members
            .get_mut(&initiator)
            .unwrap()
            .install_group_key(group_key.clone());
        Ok((group_key, messages))
    }

    /// Processes a group key distribution at its recipient. Messages from a
    /// previous epoch are ignored.
    pub fn deliver(&mut self, msg: &KeyExchange) -> Result<(), CryptoError> {
        if msg.epoch != self.epoch || msg.room_id != self.room_id {
            return Ok(());
        }
        let ExchangeKind::GroupKey { key_id } = msg.kind else {
            return Err(CryptoError::WrongMode);
        };
        let existing = self
            .members
            .get(&msg.to)
            .ok_or(CryptoError::UnknownMember(msg.to))?
            .sessions
            .get(&msg.from)
            .cloned();
        let session = match existing {
            Some(s) => s,
            None => self.derive_session(msg.to, msg.from)?,
        };
        let key: Digest32 = self
            .open_exchange(msg, &session)?
            .try_into()
            .map_err(|_| CryptoError::Authentication)?;
        let to = self.members.get_mut(&msg.to).unwrap();
        if !to.sessions.contains_key(&msg.from) {
            to.install_session(msg.from, session);
        }
        to.install_group_key(GroupKey {
            key_id,
            key,
            epoch: msg.epoch,
        });
        Ok(())
    }

    /// Applies a new member list. Returns `None` when the set of ids is
    /// unchanged. Otherwise every member's keys are nulled, ratchet keys are
    /// regenerated, and pairwise rooms re-exchange all sessions.
    pub fn on_membership_change(&mut self, members: &[(MemberId, KeyPair)]) -> Option<ResetNotice> {
        let new_ids: BTreeSet<MemberId> = members.iter().map(|(id, _)| *id).collect();
        let old_ids: BTreeSet<MemberId> = self.members.keys().copied().collect();
        if new_ids == old_ids {
            return None;
        }
        let removed: Vec<MemberId> = old_ids.difference(&new_ids).copied().collect();
        let added: Vec<MemberId> = new_ids.difference(&old_ids).copied().collect();
        for id in &removed {
            let state = self.members.remove(id).unwrap();
            self.by_device.retain(|_, v| v != id);
            self.departed.insert(*id, state);
        }
        self.epoch += 1;
        self.counters.resets += 1;
        for m in self.members.values_mut() {
            m.reset(KeyPair::generate(&mut self.rng));
        }
        for (id, device) in members.iter().filter(|(id, _)| added.contains(id)) {
            let ratchet = KeyPair::generate(&mut self.rng);
            self.by_device.insert(device.public().to_bytes(), *id);
            self.members.insert(*id, MemberState::new(*id, *device, ratchet));
        }
        self.publish_prekeys();
        let mode = self.mode();
        let exchange_messages = match mode {
            RoomMode::Pairwise => self.rekey_pairwise(),
            RoomMode::Group => 0,
        };
        Some(ResetNotice {
            epoch: self.epoch,
            mode,
            removed,
            added,
            exchange_messages,
        })
    }

    /// Encrypts a room message from `sender`. Group mode yields one envelope
    /// and creates and distributes a group key first if the sender has none.
    /// Pairwise mode yields one envelope per peer, ordered by peer id.
    pub fn encrypt(&mut self, sender: MemberId, plaintext: &[u8]) -> Result<Vec<CipherEnvelope>, CryptoError> {
        if !self.members.contains_key(&sender) {
            return Err(CryptoError::UnknownMember(sender));
        }
        let room_id = self.room_id;
        match self.mode() {
            RoomMode::Group => {
                if self.members[&sender].active.is_none() {
                    let (_, messages) = self.rekey_group(sender)?;
                    for msg in &messages {
                        self.deliver(msg)?;
                    }
                }
                let m = self.members.get_mut(&sender).unwrap();
                let key = m.active_key().expect("active key after rekey").clone();
                let index = m.group_index;
                m.group_index += 1;
                Ok(vec![group_encrypt(&key, &m.device, room_id, index, plaintext)])
            }
            RoomMode::Pairwise => {
                let m = self.members.get_mut(&sender).unwrap();
                let device = m.device;
                Ok(m.sessions
                    .values_mut()
                    .map(|s| ratchet_encrypt(s, &device, room_id, plaintext))
                    .collect())
            }
        }
    }

    /// Decrypts at `recipient`. The sender is identified by the device key
    /// in the envelope and must be a current member.
    pub fn decrypt(&mut self, recipient: MemberId, envelope: &CipherEnvelope) -> Result<Vec<u8>, CryptoError> {
        let sender_id = *self
            .by_device
            .get(&envelope.sender)
            .ok_or(CryptoError::UnknownSender)?;
        let sender_key = self.members[&sender_id].device.public();
        let m = self
            .members
            .get_mut(&recipient)
            .ok_or(CryptoError::UnknownMember(recipient))?;
        match envelope.mode {
            EnvelopeMode::Pairwise { .. } => {
                let session = m.sessions.get_mut(&sender_id).ok_or(CryptoError::NoSession {
                    from: sender_id,
                    to: recipient,
                })?;
                ratchet_decrypt(session, envelope, &sender_key)
            }
            EnvelopeMode::Group { .. } => group_decrypt(|id| m.group_keys.get(id), envelope, &sender_key),
        }
    }

    /// Finds which current member a pairwise envelope is addressed to.
    pub fn recipient_of(&self, envelope: &CipherEnvelope) -> Option<MemberId> {
        let EnvelopeMode::Pairwise { peer, .. } = envelope.mode else {
            return None;
        };
        self.members.values().find(|m| m.ratchet_pub == peer).map(|m| m.id)
    }
}

fn prekey_digest(room_id: &RoomId, epoch: u64, member: MemberId, ratchet_pub: &[u8]) -> Digest32 {
    sha256(&[
        b"prekey",
        room_id,
        &epoch.to_be_bytes(),
        &member.to_be_bytes(),
        ratchet_pub,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn devices(ids: std::ops::Range<u32>) -> Vec<(MemberId, KeyPair)> {
        ids.map(|i| (i, KeyPair::from_seed(&i.to_be_bytes()))).collect()
    }

    #[test]
    fn pairwise_counts() {
        for (n, expected) in [(2u32, 2u64), (3, 6), (10, 90)] {
            let room = RoomCrypto::new("r", &devices(0..n), 50, 1);
            assert_eq!(room.counters().pairwise_exchange, expected);
            for id in room.member_ids() {
                assert_eq!(room.member(id).unwrap().session_count(), n as usize - 1);
            }
        }
    }

    #[test]
    fn three_member_sessions_are_pairwise_consistent() {
        let room = RoomCrypto::new("r", &devices(0..3), 50, 2);
        for a in 0..3 {
            for b in 0..3 {
                if a == b {
                    continue;
                }
                let sa = room.member(a).unwrap().session(b).unwrap();
                let sb = room.member(b).unwrap().session(a).unwrap();
                assert_eq!(sa.root_key(), sb.root_key());
                assert_eq!(sa.send_chain(), sb.recv_chain());
            }
        }
    }

    #[test]
    fn pairwise_messages_reach_every_peer() {
        let mut room = RoomCrypto::new("r", &devices(0..4), 50, 3);
        let envs = room.encrypt(1, b"hi").unwrap();
        assert_eq!(envs.len(), 3);
        for env in envs {
            let to = room.recipient_of(&env).unwrap();
            assert_eq!(room.decrypt(to, &env).unwrap(), b"hi");
        }
    }

    #[test]
    fn group_rekey_is_linear() {
        let mut room = RoomCrypto::new("big", &devices(0..100), 50, 4);
        assert_eq!(room.mode(), RoomMode::Group);
        assert_eq!(room.counters().pairwise_exchange, 0);
        let env = room.encrypt(0, b"all").unwrap().remove(0);
        assert_eq!(room.counters().group_distribution, 99);
        for id in 1..100 {
            assert_eq!(room.decrypt(id, &env).unwrap(), b"all");
        }
    }

    #[test]
    fn one_key_after_reset_then_send() {
        let mut room = RoomCrypto::new("big", &devices(0..8), 4, 5);
        room.encrypt(0, b"before").unwrap();
        room.on_membership_change(&devices(0..7)).unwrap();
        room.encrypt(3, b"after").unwrap();
        room.encrypt(5, b"reply").unwrap();
        let ids: BTreeSet<KeyId> = room
            .member_ids()
            .flat_map(|m| room.member(m).unwrap().group_key_ids().copied().collect::<Vec<_>>())
            .collect();
        assert_eq!(ids.len(), 1);
    }

    #[test]
    fn concurrent_initiators_both_decryptable() {
        let mut room = RoomCrypto::new("big", &devices(0..6), 2, 6);
        let (ka, ma) = room.rekey_group(0).unwrap();
        let (kb, mb) = room.rekey_group(1).unwrap();
        assert_ne!(ka.key_id, kb.key_id);
        for msg in ma.iter().chain(&mb) {
            room.deliver(msg).unwrap();
        }
        let ea = room.encrypt(0, b"from 0").unwrap().remove(0);
        let eb = room.encrypt(1, b"from 1").unwrap().remove(0);
        for id in 2..6 {
            assert_eq!(room.decrypt(id, &ea).unwrap(), b"from 0");
            assert_eq!(room.decrypt(id, &eb).unwrap(), b"from 1");
        }
    }

    #[test]
    fn departed_member_cannot_decrypt_group_traffic() {
        let mut room = RoomCrypto::new("big", &devices(0..6), 2, 7);
        let pre = room.encrypt(0, b"old").unwrap().remove(0);
        room.decrypt(5, &pre).unwrap();
        room.on_membership_change(&devices(0..5)).unwrap();
        let gone = room.departed(5).unwrap().clone();
        assert!(gone.could_decrypt(&pre));
        for sender in 0..5 {
            let env = room.encrypt(sender, b"new").unwrap().remove(0);
            assert!(!gone.could_decrypt(&env));
            assert_eq!(room.decrypt((sender + 1) % 5, &env).unwrap(), b"new");
        }
        let env = room.encrypt(0, b"x").unwrap().remove(0);
        let mut forged = env.clone();
        forged.sender = gone.device_public().to_bytes();
        assert_eq!(room.decrypt(1, &forged).unwrap_err(), CryptoError::UnknownSender);
    }

    #[test]
    fn departed_member_cannot_decrypt_pairwise_traffic() {
        let mut room = RoomCrypto::new("small", &devices(0..4), 50, 8);
        room.encrypt(3, b"warmup").unwrap();
        let notice = room.on_membership_change(&devices(0..3)).unwrap();
        assert_eq!(notice.exchange_messages, 6);
        assert_eq!(notice.removed, vec![3]);
        let gone = room.departed(3).unwrap().clone();
        for env in room.encrypt(0, b"secret").unwrap() {
            assert!(!gone.could_decrypt(&env));
        }
    }

    #[test]
    fn join_in_pairwise_mode_reexchanges_everything() {
        let mut room = RoomCrypto::new("small", &devices(0..4), 50, 9);
        let notice = room.on_membership_change(&devices(0..5)).unwrap();
        assert_eq!(notice.exchange_messages, 20);
        assert_eq!(notice.added, vec![4]);
        assert!(room.on_membership_change(&devices(0..5)).is_none());
    }

    #[test]
    fn stale_distribution_ignored() {
        let mut room = RoomCrypto::new("big", &devices(0..5), 2, 10);
        let (_, msgs) = room.rekey_group(0).unwrap();
        room.on_membership_change(&devices(0..4)).unwrap();
        room.deliver(&msgs[0]).unwrap();
        assert!(room.member(1).unwrap().active_key().is_none());
    }
}
