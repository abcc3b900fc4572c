use std::collections::{BTreeMap, VecDeque};

use crate::hash::{sha256, Digest32};
use crate::identity::{Address, KeyPair};
use crate::pairing::GroupElement;
use crate::por::{PublicBytes, SignatureBytes};

use super::PoaError;

/// Epochs of history behind the availability score.
pub const AVAILABILITY_WINDOW: usize = 32;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StakeEntry {
    pub public: PublicBytes,
    pub stake: u64,
    /// Most recent epoch last; at most [`AVAILABILITY_WINDOW`] entries.
    pub history: VecDeque<bool>,
}

impl StakeEntry {
    pub fn accepted(&self) -> u64 {
        self.history.iter().filter(|&&ok| ok).count() as u64
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StakeRegistry {
    nodes: BTreeMap<Address, StakeEntry>,
}

impl StakeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, public: &GroupElement, stake: u64) -> Address {
        let address = Address::of(public);
        self.nodes.insert(
            address,
            StakeEntry {
                public: public.to_bytes(),
                stake,
                history: VecDeque::new(),
            },
        );
        address
    }

    /// Registers a node whose last `accepted` epochs all carried an accepted
    /// submission. Used to bootstrap a genesis validator set.
    pub fn register_available(&mut self, public: &GroupElement, stake: u64, accepted: usize) -> Address {
        let address = self.register(public, stake);
        for _ in 0..accepted {
            self.record_epoch(&address, true);
        }
        address
    }

    pub fn get(&self, node: &Address) -> Option<&StakeEntry> {
        self.nodes.get(node)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&Address, &StakeEntry)> {
        self.nodes.iter()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Address of the registered node holding `public`.
    pub fn lookup_key(&self, public: &PublicBytes) -> Option<Address> {
        self.nodes
            .iter()
            .find(|(_, e)| &e.public == public)
            .map(|(a, _)| *a)
    }

    pub fn record_epoch(&mut self, node: &Address, accepted: bool) {
        if let Some(entry) = self.nodes.get_mut(node) {
            entry.history.push_back(accepted);
            while entry.history.len() > AVAILABILITY_WINDOW {
                entry.history.pop_front();
            }
        }
    }

    /// Fraction of the last [`AVAILABILITY_WINDOW`] epochs with an accepted
    /// submission. Unknown nodes and empty histories score 0.
    pub fn availability_score(&self, node: &Address) -> f64 {
        self.nodes
            .get(node)
            .map_or(0.0, |e| e.accepted() as f64 / AVAILABILITY_WINDOW as f64)
    }

    /// `stake × accepted epochs`, i.e. `stake × score` scaled by the window.
    pub fn weight(&self, node: &Address) -> u128 {
        self.nodes
            .get(node)
            .map_or(0, |e| e.stake as u128 * e.accepted() as u128)
    }

    pub fn total_weight(&self) -> u128 {
        self.nodes.keys().map(|a| self.weight(a)).sum()
    }
}

/// Accumulated randomness: every epoch, each validator signs the epoch
/// number and the signatures are hash-mixed in address order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandaoState {
    pub epoch: u64,
    pub seed: Digest32,
}

impl RandaoState {
    pub fn genesis(seed: Digest32) -> Self {
        RandaoState { epoch: 0, seed }
    }

    pub fn reveal_digest(epoch: u64) -> Digest32 {
        sha256(&[b"randao-reveal", &epoch.to_be_bytes()])
    }

    pub fn reveal(key: &KeyPair, epoch: u64) -> SignatureBytes {
        key.sign(&Self::reveal_digest(epoch)).to_bytes()
    }

    /// Mixes the reveals for `self.epoch` and moves to the next epoch.
    /// Every reveal must come from a registered node and verify.
    pub fn advance(
        &self,
        registry: &StakeRegistry,
        reveals: &BTreeMap<Address, SignatureBytes>,
    ) -> Result<RandaoState, PoaError> {
        let digest = Self::reveal_digest(self.epoch);
        let mut seed = self.seed;
        for (node, sig) in reveals {
            let entry = registry.get(node).ok_or(PoaError::UnknownNode(*node))?;
            let ok = GroupElement::from_bytes(&entry.public)
                .is_ok_and(|pk| crate::identity::verify_event(&pk, &digest, sig));
            if !ok {
                return Err(PoaError::BadReveal(*node));
            }
            seed = sha256(&[&seed, &node.0, sig]);
        }
        Ok(RandaoState {
            epoch: self.epoch + 1,
            seed,
        })
    }
}

/// `seed mod m`, reading the seed as a big-endian integer.
fn reduce(seed: &Digest32, m: u128) -> u128 {
    seed.iter().fold(0u128, |acc, &b| ((acc << 8) | b as u128) % m)
}

/// Picks the node whose interval on the cumulative weight line (nodes in
/// address order) contains `seed mod total_weight`.
pub fn select_validator(registry: &StakeRegistry, randao: &RandaoState) -> Result<Address, PoaError> {
    let total = registry.total_weight();
    if total == 0 {
        return Err(PoaError::NoWeight);
    }
    // keeps the shift in `reduce` from overflowing
    assert!(total < 1 << 120, "total weight out of range");
    let draw = reduce(&randao.seed, total);
    let mut acc = 0u128;
    for node in registry.nodes.keys() {
        acc += registry.weight(node);
        if draw < acc {
            return Ok(*node);
        }
    }
    unreachable!("draw below total weight")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(i: u8) -> KeyPair {
        KeyPair::from_seed(&[b'v', i])
    }

    #[test]
    fn availability_counts_last_window() {
        let mut reg = StakeRegistry::new();
        let a = reg.register(&key(1).public(), 10);
        assert_eq!(reg.availability_score(&a), 0.0);
        for e in 0..40 {
            reg.record_epoch(&a, e % 4 == 0);
        }
        assert_eq!(reg.availability_score(&a), 0.25);
        let b = reg.register_available(&key(2).public(), 10, 50);
        assert_eq!(reg.availability_score(&b), 1.0);
        assert_eq!(reg.weight(&b), 320);
    }

    #[test]
    fn single_staker_always_selected_zero_weight_never() {
        let mut reg = StakeRegistry::new();
        let a = reg.register_available(&key(1).public(), 5, 32);
        let z = reg.register(&key(2).public(), 1_000_000);
        for i in 0..200u64 {
            let r = RandaoState::genesis(sha256(&[&i.to_be_bytes()]));
            assert_eq!(select_validator(&reg, &r).unwrap(), a);
        }
        assert_eq!(reg.weight(&z), 0);
        let empty = StakeRegistry::new();
        assert_eq!(
            select_validator(&empty, &RandaoState::genesis([0; 32])).unwrap_err(),
            PoaError::NoWeight
        );
    }

    #[test]
    fn reduce_matches_small_modulus() {
        let mut seed = [0u8; 32];
        seed[31] = 200;
        seed[30] = 1;
        assert_eq!(reduce(&seed, 7), 456 % 7);
        assert_eq!(reduce(&[0xff; 32], 1), 0);
    }

    #[test]
    fn randao_mixes_in_address_order() {
        let mut reg = StakeRegistry::new();
        let keys: Vec<KeyPair> = (0..3).map(key).collect();
        let addrs: Vec<Address> = keys.iter().map(|k| reg.register(&k.public(), 1)).collect();
        let r0 = RandaoState::genesis([7; 32]);
        let reveals: BTreeMap<Address, SignatureBytes> =
            keys.iter().zip(&addrs).map(|(k, a)| (*a, RandaoState::reveal(k, 0))).collect();
        let r1 = r0.advance(&reg, &reveals).unwrap();
        assert_eq!(r1, r0.advance(&reg, &reveals).unwrap());
        assert_eq!(r1.epoch, 1);
        let mut expected = r0.seed;
        for (a, s) in &reveals {
            expected = sha256(&[&expected, &a.0, s]);
        }
        assert_eq!(r1.seed, expected);

        let mut bad = reveals.clone();
        bad.insert(addrs[1], RandaoState::reveal(&keys[1], 5));
        assert_eq!(r0.advance(&reg, &bad).unwrap_err(), PoaError::BadReveal(addrs[1]));
    }
}
