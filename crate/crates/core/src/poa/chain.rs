use std::collections::{BTreeMap, BTreeSet};

use crate::codec::{DecodeError, Reader, Writer};
use crate::hash::{sha256, Digest32};
use crate::identity::{Address, KeyPair, SIGNATURE_BYTES};
use crate::kzg::KzgParams;
use crate::pairing::GroupElement;
use crate::por::{verify_workload, PorError, PublicBytes, RelayBill, SignatureBytes, WorkloadProof};
use crate::room_state::EventId;

use super::stake::{select_validator, RandaoState, StakeRegistry};
use super::verkle::{Account, VerkleKey, VerkleTree};
use super::{PoaError, Rejection};

/// What a relay submits for one epoch: its workload proof and the
/// endorsed bill for the same traffic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Submission {
    pub workload: WorkloadProof,
    pub bill: RelayBill,
}

impl Submission {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.frame(&self.workload.to_bytes()).frame(&self.bill.to_bytes());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Submission, DecodeError> {
        let mut r = Reader::new(bytes);
        let workload = WorkloadProof::from_bytes(r.frame()?)?;
        let bill = RelayBill::from_bytes(r.frame()?)?;
        r.finish()?;
        Ok(Submission { workload, bill })
    }
}

pub fn account_key(node: &Address) -> VerkleKey {
    sha256(&[b"account", &node.0])
}

/// Submissions left out of a block, by index into the pending list.
pub type Refused = Vec<(usize, Rejection)>;

/// Event ids and epochs already paid for, plus per-node balances.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CreditLedger {
    events: BTreeSet<EventId>,
    epochs: BTreeSet<(PublicBytes, u64)>,
    balances: BTreeMap<Address, u64>,
}

impl CreditLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn balance(&self, node: &Address) -> u64 {
        self.balances.get(node).copied().unwrap_or(0)
    }

    pub fn total_credited(&self) -> u64 {
        self.balances.values().sum()
    }

    pub fn is_credited(&self, event_id: &EventId) -> bool {
        self.events.contains(event_id)
    }

    /// Runs every check without crediting. Returns the bill total.
    pub fn check(&self, params: &KzgParams, submission: &Submission) -> Result<u64, Rejection> {
        let Submission { workload, bill } = submission;
        if bill.relay != workload.relay {
            return Err(Rejection::RelayMismatch);
        }
        let seed = crate::por::sample_seed(&workload.relay, workload.epoch, &workload.commitment);
        verify_workload(params, workload, &seed).map_err(Rejection::Workload)?;
        match bill.verify_endorsed() {
            Ok(()) => {}
            Err(e @ (PorError::RootMismatch | PorError::MissingEvents { .. } | PorError::ReceiptMismatch)) => {
                return Err(Rejection::Root(e))
            }
            Err(e) => return Err(Rejection::Signature(e)),
        }
        let billed: BTreeSet<&EventId> = bill.event_ids().collect();
        if workload.openings.iter().any(|o| !billed.contains(&o.event_id)) {
            return Err(Rejection::Unbilled);
        }
        if self.epochs.contains(&(workload.relay, workload.epoch)) {
            return Err(Rejection::DoubleCredit(format!("epoch {}", workload.epoch)));
        }
        if let Some(id) = billed.iter().find(|id| self.events.contains(**id)) {
            return Err(Rejection::DoubleCredit(hex::encode(&id[..8])));
        }
        Ok(bill.total())
    }

    /// Checks and, on acceptance, credits the relay with the bill total.
    pub fn assess_por(&mut self, params: &KzgParams, submission: &Submission) -> Result<u64, Rejection> {
        let total = self.check(params, submission)?;
        let relay = GroupElement::from_bytes(&submission.bill.relay)
            .map(|pk| Address::of(&pk))
            .map_err(|_| Rejection::RelayMismatch)?;
        self.events.extend(submission.bill.event_ids().copied());
        self.epochs
            .insert((submission.workload.relay, submission.workload.epoch));
        *self.balances.entry(relay).or_insert(0) += total;
        Ok(total)
    }
}

/// Encoding of the signed header:
///
/// ```text
/// u64 height frame(parent) frame(validator) frame(validator_key)
/// u32 n (frame(address) frame(reveal))* u32 m frame(submission)*
/// frame(state_root)
/// ```
///
/// followed by `frame(signature)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub parent: Digest32,
    pub validator: Address,
    pub validator_key: PublicBytes,
    pub randao_reveals: BTreeMap<Address, SignatureBytes>,
    pub submissions: Vec<Submission>,
    pub state_root: Digest32,
    pub signature: SignatureBytes,
}

impl Block {
    pub fn body(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.height)
            .frame(&self.parent)
            .frame(&self.validator.0)
            .frame(&self.validator_key)
            .u32(self.randao_reveals.len() as u32);
        for (a, s) in &self.randao_reveals {
            w.frame(&a.0).frame(s);
        }
        w.u32(self.submissions.len() as u32);
        for s in &self.submissions {
            w.frame(&s.to_bytes());
        }
        w.frame(&self.state_root);
        w.finish()
    }

    pub fn digest(&self) -> Digest32 {
        sha256(&[b"block", &self.body()])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.body()).frame(&self.signature);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Block, DecodeError> {
        let mut r = Reader::new(bytes);
        let height = r.u64()?;
        let parent = fixed(r.frame()?)?;
        let validator = Address(fixed(r.frame()?)?);
        let validator_key = fixed(r.frame()?)?;
        let mut randao_reveals = BTreeMap::new();
        for _ in 0..r.u32()? {
            randao_reveals.insert(Address(fixed(r.frame()?)?), fixed(r.frame()?)?);
        }
        let n = r.u32()? as usize;
        let mut submissions = Vec::with_capacity(n.min(256));
        for _ in 0..n {
            submissions.push(Submission::from_bytes(r.frame()?)?);
        }
        let state_root = fixed(r.frame()?)?;
        let signature = fixed(r.frame()?)?;
        r.finish()?;
        Ok(Block {
            height,
            parent,
            validator,
            validator_key,
            randao_reveals,
            submissions,
            state_root,
            signature,
        })
    }
}

fn fixed<const N: usize>(bytes: &[u8]) -> Result<[u8; N], DecodeError> {
    bytes.try_into().map_err(|_| DecodeError::invalid("fixed-width field"))
}

/// Everything a node needs to produce or follow the chain.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub height: u64,
    pub tip: Digest32,
    pub registry: StakeRegistry,
    pub randao: RandaoState,
    pub ledger: CreditLedger,
    pub accounts: VerkleTree,
}

impl ChainState {
    pub fn genesis(registry: StakeRegistry, seed: Digest32) -> Self {
        ChainState {
            height: 0,
            tip: sha256(&[b"genesis", &seed]),
            registry,
            randao: RandaoState::genesis(seed),
            ledger: CreditLedger::new(),
            accounts: VerkleTree::new(),
        }
    }

    pub fn state_root(&self) -> Digest32 {
        self.accounts.root()
    }

    /// The validator entitled to produce the next block.
    pub fn next_validator(&self) -> Result<Address, PoaError> {
        select_validator(&self.registry, &self.randao)
    }

    /// Applies accepted submissions, credits, and rolls availability and
    /// randomness forward. `strict` rejects the whole block on any refused
    /// submission; otherwise refused submissions are dropped and returned.
    fn transition(
        &self,
        params: &KzgParams,
        reveals: &BTreeMap<Address, SignatureBytes>,
        submissions: &[Submission],
        strict: bool,
    ) -> Result<(ChainState, Vec<Submission>, Refused), PoaError> {
        let mut next = self.clone();
        let mut accepted = Vec::new();
        let mut refused = Vec::new();
        let mut served = BTreeSet::new();
        for (i, s) in submissions.iter().enumerate() {
            match next.ledger.assess_por(params, s) {
                Ok(total) => {
                    let relay = GroupElement::from_bytes(&s.bill.relay).map(|pk| Address::of(&pk)).ok();
                    if let Some(relay) = relay {
                        let key = account_key(&relay);
                        let mut account = next.accounts.get(&key).copied().unwrap_or_default();
                        account.balance += total;
                        account.nonce += 1;
                        next.accounts.update(key, account);
                        served.insert(relay);
                    }
                    accepted.push(s.clone());
                }
                Err(r) if strict => return Err(PoaError::Rejected { index: i, reason: r }),
                Err(r) => refused.push((i, r)),
            }
        }
        let nodes: Vec<Address> = next.registry.nodes().map(|(a, _)| *a).collect();
        for node in nodes {
            next.registry.record_epoch(&node, served.contains(&node));
        }
        next.randao = self.randao.advance(&self.registry, reveals)?;
        next.height = self.height + 1;
        Ok((next, accepted, refused))
    }

    /// Produces the next block if `validator` is the selected one.
    /// `reveals` are this epoch's RANDAO reveals. Submissions that fail
    /// assessment are left out and reported.
    pub fn produce_block(
        &self,
        params: &KzgParams,
        validator: &KeyPair,
        reveals: BTreeMap<Address, SignatureBytes>,
        pending: &[Submission],
    ) -> Result<(Block, ChainState, Refused), PoaError> {
        let selected = self.next_validator()?;
        if selected != validator.address() {
            return Err(PoaError::NotSelected {
                expected: selected,
                got: validator.address(),
            });
        }
        let (next, accepted, refused) = self.transition(params, &reveals, pending, false)?;
        let mut block = Block {
            height: next.height,
            parent: self.tip,
            validator: selected,
            validator_key: validator.public().to_bytes(),
            randao_reveals: reveals,
            submissions: accepted,
            state_root: next.state_root(),
            signature: [0; SIGNATURE_BYTES],
        };
        block.signature = validator.sign(&block.digest()).to_bytes();
        let mut next = next;
        next.tip = block.digest();
        Ok((block, next, refused))
    }

    /// Follower check: re-derives the selected validator, the signature,
    /// every assessment and the state root.
    pub fn verify_block(&self, params: &KzgParams, block: &Block) -> Result<ChainState, PoaError> {
        if block.height != self.height + 1 || block.parent != self.tip {
            return Err(PoaError::WrongParent);
        }
        let selected = self.next_validator()?;
        let key_ok = self
            .registry
            .get(&selected)
            .is_some_and(|e| e.public == block.validator_key);
        if block.validator != selected || !key_ok {
            return Err(PoaError::NotSelected {
                expected: selected,
                got: block.validator,
            });
        }
        let sig_ok = GroupElement::from_bytes(&block.validator_key)
            .is_ok_and(|pk| crate::identity::verify_event(&pk, &block.digest(), &block.signature));
        if !sig_ok {
            return Err(PoaError::BadBlockSignature);
        }
        let (mut next, _, _) = self.transition(params, &block.randao_reveals, &block.submissions, true)?;
        if next.state_root() != block.state_root {
            return Err(PoaError::StateRootMismatch);
        }
        next.tip = block.digest();
        Ok(next)
    }

    pub fn account(&self, node: &Address) -> Account {
        self.accounts.get(&account_key(node)).copied().unwrap_or_default()
    }
}

/// RANDAO reveals from every key for the state's current epoch.
pub fn collect_reveals(state: &ChainState, keys: &[KeyPair]) -> BTreeMap<Address, SignatureBytes> {
    keys.iter()
        .filter(|k| state.registry.get(&k.address()).is_some())
        .map(|k| (k.address(), RandaoState::reveal(k, state.randao.epoch)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn validators() -> (Vec<KeyPair>, StakeRegistry) {
        let keys: Vec<KeyPair> = (0..3u8).map(|i| KeyPair::from_seed(&[b'c', i])).collect();
        let mut reg = StakeRegistry::new();
        for k in &keys {
            reg.register_available(&k.public(), 100, 32);
        }
        (keys, reg)
    }

    fn selected<'a>(state: &ChainState, keys: &'a [KeyPair]) -> &'a KeyPair {
        let a = state.next_validator().unwrap();
        keys.iter().find(|k| k.address() == a).unwrap()
    }

    #[test]
    fn empty_block_keeps_root_and_followers_agree() {
        let params = crate::por::epoch_params(4).unwrap();
        let (keys, reg) = validators();
        let state = ChainState::genesis(reg, [1; 32]);
        let v = selected(&state, &keys);
        let (block, next, refused) = state
            .produce_block(&params, v, collect_reveals(&state, &keys), &[])
            .unwrap();
        assert!(refused.is_empty());
        assert_eq!(block.state_root, state.state_root());
        let followed = state.verify_block(&params, &block).unwrap();
        assert_eq!(followed.tip, next.tip);
        assert_eq!(followed.randao, next.randao);
        assert_eq!(Block::from_bytes(&block.to_bytes()).unwrap(), block);
    }

    #[test]
    fn wrong_validator_rejected() {
        let params = crate::por::epoch_params(4).unwrap();
        let (keys, reg) = validators();
        let state = ChainState::genesis(reg, [2; 32]);
        let v = selected(&state, &keys);
        let other = keys.iter().find(|k| k.address() != v.address()).unwrap();
        assert!(matches!(
            state.produce_block(&params, other, BTreeMap::new(), &[]),
            Err(PoaError::NotSelected { .. })
        ));
        let (mut block, _, _) = state.produce_block(&params, v, BTreeMap::new(), &[]).unwrap();
        block.validator = other.address();
        block.validator_key = other.public().to_bytes();
        block.signature = other.sign(&block.digest()).to_bytes();
        assert!(matches!(
            state.verify_block(&params, &block),
            Err(PoaError::NotSelected { .. })
        ));
    }

    #[test]
    fn tampered_root_rejected() {
        let params = crate::por::epoch_params(4).unwrap();
        let (keys, reg) = validators();
        let state = ChainState::genesis(reg, [3; 32]);
        let v = selected(&state, &keys);
        let (mut block, _, _) = state.produce_block(&params, v, BTreeMap::new(), &[]).unwrap();
        block.state_root[0] ^= 1;
        block.signature = v.sign(&block.digest()).to_bytes();
        assert_eq!(state.verify_block(&params, &block).unwrap_err(), PoaError::StateRootMismatch);
    }
}
