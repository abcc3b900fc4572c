//! Account tree whose inner nodes are 16-slot KZG vector commitments.
//!
//! Keys are 32 bytes read as 64 nibbles, most significant nibble first. A
//! subtree holding a single account collapses into a leaf at the shallowest
//! depth where its prefix is unique, so paths stay short.
//!
//! Slot values are scalar digests: an empty slot is 0, a leaf is
//! `H("verkle-leaf" ‖ key ‖ account) mod p`, an inner node is its node
//! digest `H("verkle-node" ‖ commitment) mod p`. The root digest is the
//! 32-byte node digest of the root before reduction.
//!
//! A path proof lists each inner commitment from the root down with an
//! evaluation witness for the slot the key selects, and ends with the leaf
//! found (or nothing, for an empty slot).

use std::sync::OnceLock;

use crate::codec::{DecodeError, Reader, Writer};
use crate::hash::{sha256, Digest32};
use crate::kzg::{Commitment, KzgParams, Polynomial};
use crate::pairing::{GroupElement, Scalar};

pub const ARITY: usize = 16;
const KEY_NIBBLES: usize = 64;
const VERKLE_PARAMS_SEED: u64 = 0x7e4c1e;

pub type VerkleKey = [u8; 32];

/// Shared width-16 parameters.
pub fn verkle_params() -> &'static KzgParams {
    static PARAMS: OnceLock<KzgParams> = OnceLock::new();
    PARAMS.get_or_init(|| KzgParams::setup_seeded(ARITY, VERKLE_PARAMS_SEED).expect("valid size"))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Account {
    pub balance: u64,
    pub nonce: u64,
}

impl Account {
    pub fn to_bytes(&self) -> [u8; 16] {
        let mut out = [0; 16];
        out[..8].copy_from_slice(&self.balance.to_be_bytes());
        out[8..].copy_from_slice(&self.nonce.to_be_bytes());
        out
    }
}

pub fn nibble(key: &VerkleKey, depth: usize) -> usize {
    let b = key[depth / 2];
    if depth % 2 == 0 {
        (b >> 4) as usize
    } else {
        (b & 0x0f) as usize
    }
}

pub fn leaf_digest(key: &VerkleKey, account: &Account) -> Scalar {
    Scalar::from_be_bytes_mod_order(&sha256(&[b"verkle-leaf", key, &account.to_bytes()]))
}

fn node_digest(commitment: &Commitment) -> Digest32 {
    sha256(&[b"verkle-node", &commitment.to_bytes()])
}

#[derive(Clone, Debug, Default)]
enum Node {
    #[default]
    Empty,
    Leaf { key: VerkleKey, account: Account },
    Inner(Box<Inner>),
}

#[derive(Clone, Debug)]
struct Inner {
    children: [Node; ARITY],
    values: [Scalar; ARITY],
    commitment: Commitment,
}

impl Inner {
    fn empty() -> Self {
        Inner {
            children: Default::default(),
            values: [Scalar::ZERO; ARITY],
            commitment: Commitment::identity(),
        }
    }

    /// Sets slot `i` to `child` and updates the commitment by the digest
    /// delta.
    fn set(&mut self, i: usize, child: Node) {
        let value = child.digest();
        let delta = value - self.values[i];
        self.commitment = verkle_params()
            .update_commitment(&self.commitment, i as u64, delta)
            .expect("slot below arity");
        self.values[i] = value;
        self.children[i] = child;
    }
}

impl Node {
    fn digest(&self) -> Scalar {
        match self {
            Node::Empty => Scalar::ZERO,
            Node::Leaf { key, account } => leaf_digest(key, account),
            Node::Inner(inner) => Scalar::from_be_bytes_mod_order(&node_digest(&inner.commitment)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct VerkleTree {
    root: Inner,
    len: usize,
}

impl Default for VerkleTree {
    fn default() -> Self {
        VerkleTree {
            root: Inner::empty(),
            len: 0,
        }
    }
}

/// Inserts into the subtree at `depth` and returns the replacement node.
fn insert(node: Node, key: VerkleKey, account: Account, depth: usize, added: &mut bool) -> Node {
    match node {
        Node::Empty => {
            *added = true;
            Node::Leaf { key, account }
        }
        Node::Leaf { key: k, .. } if k == key => Node::Leaf { key, account },
        Node::Leaf {
            key: other,
            account: other_account,
        } => {
            assert!(depth < KEY_NIBBLES, "distinct keys diverge before the last nibble");
            let mut inner = Inner::empty();
            inner.set(
                nibble(&other, depth),
                Node::Leaf {
                    key: other,
                    account: other_account,
                },
            );
            insert_inner(&mut inner, key, account, depth, added);
            Node::Inner(Box::new(inner))
        }
        Node::Inner(mut inner) => {
            insert_inner(&mut inner, key, account, depth, added);
            Node::Inner(inner)
        }
    }
}

fn insert_inner(inner: &mut Inner, key: VerkleKey, account: Account, depth: usize, added: &mut bool) {
    let i = nibble(&key, depth);
    let child = std::mem::take(&mut inner.children[i]);
    let child = insert(child, key, account, depth + 1, added);
    inner.set(i, child);
}

impl VerkleTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn root(&self) -> Digest32 {
        node_digest(&self.root.commitment)
    }

    pub fn update(&mut self, key: VerkleKey, account: Account) {
        let mut added = false;
        insert_inner(&mut self.root, key, account, 0, &mut added);
        if added {
            self.len += 1;
        }
    }

    pub fn get(&self, key: &VerkleKey) -> Option<&Account> {
        let mut inner = &self.root;
        let mut depth = 0;
        loop {
            match &inner.children[nibble(key, depth)] {
                Node::Empty => return None,
                Node::Leaf { key: k, account } => return (k == key).then_some(account),
                Node::Inner(next) => {
                    inner = next;
                    depth += 1;
                }
            }
        }
    }

    /// Path proof for `key`, whether or not it is present.
    pub fn prove(&self, key: &VerkleKey) -> PathProof {
        let params = verkle_params();
        let mut levels = Vec::new();
        let mut inner = &self.root;
        let mut depth = 0;
        loop {
            let i = nibble(key, depth);
            let poly = Polynomial::interpolate_domain(&inner.values);
            let proof = params
                .create_witness(&poly, Scalar::from_u64(i as u64))
                .expect("arity-sized polynomial");
            levels.push(PathLevel {
                commitment: inner.commitment,
                witness: proof.witness,
            });
            match &inner.children[i] {
                Node::Empty => {
                    return PathProof {
                        levels,
                        terminal: None,
                    }
                }
                Node::Leaf { key, account } => {
                    return PathProof {
                        levels,
                        terminal: Some((*key, *account)),
                    }
                }
                Node::Inner(next) => {
                    inner = next;
                    depth += 1;
                }
            }
        }
    }

    /// Visits every account in key order.
    pub fn accounts(&self) -> Vec<(VerkleKey, Account)> {
        fn walk(node: &Node, out: &mut Vec<(VerkleKey, Account)>) {
            match node {
                Node::Empty => {}
                Node::Leaf { key, account } => out.push((*key, *account)),
                Node::Inner(inner) => inner.children.iter().for_each(|c| walk(c, out)),
            }
        }
        let mut out = Vec::with_capacity(self.len);
        self.root.children.iter().for_each(|c| walk(c, &mut out));
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PathLevel {
    pub commitment: Commitment,
    pub witness: GroupElement,
}

/// Encoding: `u32 levels (frame(commitment) frame(witness))* u8 found
/// [frame(key) u64 balance u64 nonce]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathProof {
    pub levels: Vec<PathLevel>,
    /// The leaf the path ends at, `None` for an empty slot.
    pub terminal: Option<(VerkleKey, Account)>,
}

impl PathProof {
    /// Checks the commitments and witnesses from the root down. Returns
    /// false on any malformed proof.
    fn verify_path(&self, root: &Digest32, key: &VerkleKey) -> bool {
        let params = verkle_params();
        let Some(first) = self.levels.first() else {
            return false;
        };
        if self.levels.len() > KEY_NIBBLES || node_digest(&first.commitment) != *root {
            return false;
        }
        for (depth, level) in self.levels.iter().enumerate() {
            let value = match self.levels.get(depth + 1) {
                Some(next) => Scalar::from_be_bytes_mod_order(&node_digest(&next.commitment)),
                None => match &self.terminal {
                    Some((k, a)) => leaf_digest(k, a),
                    None => Scalar::ZERO,
                },
            };
            let point = Scalar::from_u64(nibble(key, depth) as u64);
            if !params.verify_eval(&level.commitment, point, value, &level.witness) {
                return false;
            }
        }
        true
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u32(self.levels.len() as u32);
        for l in &self.levels {
            w.frame(&l.commitment.to_bytes()).frame(&l.witness.to_bytes());
        }
        match &self.terminal {
            None => {
                w.u8(0);
            }
            Some((k, a)) => {
                w.u8(1).frame(k).u64(a.balance).u64(a.nonce);
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<PathProof, DecodeError> {
        let mut r = Reader::new(bytes);
        let n = r.u32()? as usize;
        if n > KEY_NIBBLES {
            return Err(DecodeError::invalid("path length"));
        }
        let mut levels = Vec::with_capacity(n);
        for _ in 0..n {
            levels.push(PathLevel {
                commitment: Commitment::from_bytes(r.frame()?)?,
                witness: GroupElement::from_bytes(r.frame()?)?,
            });
        }
        let terminal = match r.u8()? {
            0 => None,
            1 => {
                let key = r.frame()?.try_into().map_err(|_| DecodeError::invalid("key"))?;
                Some((
                    key,
                    Account {
                        balance: r.u64()?,
                        nonce: r.u64()?,
                    },
                ))
            }
            _ => return Err(DecodeError::invalid("terminal flag")),
        };
        r.finish()?;
        Ok(PathProof { levels, terminal })
    }
}

/// Membership: `key` holds `account` under `root`.
pub fn verkle_verify(root: &Digest32, key: &VerkleKey, account: &Account, proof: &PathProof) -> bool {
    proof.terminal == Some((*key, *account)) && proof.verify_path(root, key)
}

/// Non-membership: the path for `key` ends at an empty slot or at a leaf
/// with a different key sharing the path prefix.
pub fn verkle_verify_absent(root: &Digest32, key: &VerkleKey, proof: &PathProof) -> bool {
    let consistent = match &proof.terminal {
        None => true,
        Some((k, _)) => k != key && (0..proof.levels.len()).all(|d| nibble(k, d) == nibble(key, d)),
    };
    consistent && proof.verify_path(root, key)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(i: u32) -> VerkleKey {
        sha256(&[b"k", &i.to_be_bytes()])
    }

    fn acct(b: u64) -> Account {
        Account { balance: b, nonce: 0 }
    }

    #[test]
    fn single_leaf_round_trip() {
        let mut t = VerkleTree::new();
        let empty_root = t.root();
        t.update(key(1), acct(5));
        assert_ne!(t.root(), empty_root);
        let p = t.prove(&key(1));
        assert_eq!(p.levels.len(), 1);
        assert!(verkle_verify(&t.root(), &key(1), &acct(5), &p));
        assert!(!verkle_verify(&t.root(), &key(1), &acct(6), &p));
        assert_eq!(PathProof::from_bytes(&p.to_bytes()).unwrap(), p);
    }

    #[test]
    fn stale_proof_fails_after_other_update() {
        let mut t = VerkleTree::new();
        for i in 0..20 {
            t.update(key(i), acct(i as u64));
        }
        let p = t.prove(&key(3));
        let old = t.root();
        t.update(key(7), acct(700));
        assert_ne!(old, t.root());
        assert!(verkle_verify(&old, &key(3), &acct(3), &p));
        assert!(!verkle_verify(&t.root(), &key(3), &acct(3), &p));
        assert!(verkle_verify(&t.root(), &key(3), &acct(3), &t.prove(&key(3))));
    }

    #[test]
    fn root_matches_rebuild_in_other_order() {
        let mut a = VerkleTree::new();
        let mut b = VerkleTree::new();
        for i in 0..50 {
            a.update(key(i), acct(i as u64));
        }
        for i in (0..50).rev() {
            b.update(key(i), acct(i as u64));
        }
        assert_eq!(a.root(), b.root());
        assert_eq!(a.len(), 50);
        a.update(key(10), acct(10));
        assert_eq!(a.root(), b.root());
        assert_eq!(a.len(), 50);
    }

    #[test]
    fn shared_prefix_keys_split_deep() {
        let mut t = VerkleTree::new();
        let mut k1 = [0u8; 32];
        let mut k2 = [0u8; 32];
        k1[2] = 0x10;
        k2[2] = 0x11;
        t.update(k1, acct(1));
        t.update(k2, acct(2));
        let p = t.prove(&k2);
        assert_eq!(p.levels.len(), 6);
        assert!(verkle_verify(&t.root(), &k2, &acct(2), &p));
        assert_eq!(t.get(&k1), Some(&acct(1)));
    }

    #[test]
    fn absence_proofs() {
        let mut t = VerkleTree::new();
        for i in 0..30 {
            t.update(key(i), acct(1));
        }
        for i in 100..110 {
            let p = t.prove(&key(i));
            assert!(verkle_verify_absent(&t.root(), &key(i), &p));
            assert!(!verkle_verify(&t.root(), &key(i), &acct(1), &p));
        }
        let present = t.prove(&key(4));
        assert!(!verkle_verify_absent(&t.root(), &key(4), &present));
    }

    #[test]
    fn corrupted_witness_fails() {
        let mut t = VerkleTree::new();
        for i in 0..40 {
            t.update(key(i), acct(i as u64));
        }
        let mut p = t.prove(&key(9));
        p.levels[0].witness = p.levels[0].witness.double();
        assert!(!verkle_verify(&t.root(), &key(9), &acct(9), &p));
    }
}
