//! End-to-end settlement run for one relay segment, with optional fault
//! injection.
//!
//! An outbound node sends `n` messages through one relay to one inbound
//! node. The run walks every stage in order (envelope, endorsement,
//! acceptance, receipts, bill, endorsement, workload commitment, proof,
//! assessment) and stops at the first rejection. Each epoch of
//! [`DEFAULT_EPOCH_CAPACITY`] messages settles as one bill plus one workload
//! proof.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::hash::sha256;
use crate::identity::{Address, KeyPair};
use crate::kzg::KzgParams;
use crate::poa::{
    collect_reveals, verkle_verify, Block, ChainState, CreditLedger, PoaError, StakeRegistry, Submission,
    AVAILABILITY_WINDOW,
};
use crate::por::{
    assemble_outbound, chain_digest, build_receipt, compile_bill, epoch_params, inbound_accept, outbound_endorse,
    relay_endorse, InboundBatch, Membership, OutboundLedger, PorError, ReceiptPolicy, RelayLedger,
    WorkloadEpoch, COEFFICIENT_SCALE, DEFAULT_EPOCH_CAPACITY,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Assemble,
    RelayVerify,
    InboundAccept,
    Receipt,
    BillCompile,
    OutboundEndorse,
    EpochCommit,
    WorkloadProve,
    Assess,
    Resubmit,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Assemble => "assemble",
            Stage::RelayVerify => "relay_verify",
            Stage::InboundAccept => "inbound_accept",
            Stage::Receipt => "receipt",
            Stage::BillCompile => "bill_compile",
            Stage::OutboundEndorse => "outbound_endorse",
            Stage::EpochCommit => "epoch_commit",
            Stage::WorkloadProve => "workload_prove",
            Stage::Assess => "assess",
            Stage::Resubmit => "resubmit",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Fault injection points.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tamper {
    /// Declared message size off by one.
    Envelope,
    /// Relay signature corrupted in flight.
    Endorse,
    /// Receipt coefficient raised after signing.
    Receipt,
    /// Relay inflates a bill line and re-signs.
    Bill,
    /// Sampled slot value swapped for an unrelayed digest.
    Proof,
    /// Accepted submission sent again.
    Replay,
}

impl Tamper {
    pub const ALL: [Tamper; 6] = [
        Tamper::Envelope,
        Tamper::Endorse,
        Tamper::Receipt,
        Tamper::Bill,
        Tamper::Proof,
        Tamper::Replay,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Tamper::Envelope => "envelope",
            Tamper::Endorse => "endorse",
            Tamper::Receipt => "receipt",
            Tamper::Bill => "bill",
            Tamper::Proof => "proof",
            Tamper::Replay => "replay",
        }
    }

    /// Where the fault must be caught.
    pub fn detected_at(&self) -> Stage {
        match self {
            Tamper::Envelope => Stage::RelayVerify,
            Tamper::Endorse => Stage::InboundAccept,
            Tamper::Receipt => Stage::BillCompile,
            Tamper::Bill => Stage::OutboundEndorse,
            Tamper::Proof => Stage::Assess,
            Tamper::Replay => Stage::Resubmit,
        }
    }
}

impl FromStr for Tamper {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tamper::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown tamper stage `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageLine {
    pub stage: Stage,
    pub count: usize,
    /// `Err` holds the rejection reason.
    pub outcome: Result<String, String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DemoReport {
    pub messages: usize,
    pub stages: Vec<StageLine>,
    /// Milli-credits the outbound node expects to pay, from its own log.
    pub outbound_total: u64,
    /// Sum of the relay's bill totals.
    pub relay_total: u64,
    /// Sum over inbound receipts of the leaves each receipt root covers.
    pub inbound_total: u64,
    pub credited: u64,
    /// Every submission the validator accepted, in order.
    pub submissions: Vec<Submission>,
}

impl DemoReport {
    pub fn rejected_at(&self) -> Option<Stage> {
        self.stages.iter().find(|l| l.outcome.is_err()).map(|l| l.stage)
    }

    pub fn settled(&self) -> bool {
        self.rejected_at().is_none()
            && self.outbound_total == self.relay_total
            && self.relay_total == self.inbound_total
            && self.inbound_total == self.credited
    }

    /// One `key=value` line per stage followed by the totals.
    pub fn trace(&self) -> String {
        let mut out = String::new();
        for l in &self.stages {
            match &l.outcome {
                Ok(detail) if detail.is_empty() => {
                    out += &format!("stage={} status=ok count={}\n", l.stage, l.count)
                }
                Ok(detail) => out += &format!("stage={} status=ok count={} {detail}\n", l.stage, l.count),
                Err(reason) => out += &format!("stage={} status=rejected reason=\"{reason}\"\n", l.stage),
            }
        }
        out += &format!(
            "totals outbound={} relay={} inbound={} credited={}\n",
            self.outbound_total, self.relay_total, self.inbound_total, self.credited
        );
        out
    }
}

struct Tally {
    report: DemoReport,
}

impl Tally {
    fn ok(&mut self, stage: Stage, count: usize, detail: String) {
        match self.report.stages.iter_mut().find(|l| l.stage == stage) {
            Some(line) => {
                line.count += count;
                line.outcome = Ok(detail);
            }
            None => self.report.stages.push(StageLine {
                stage,
                count,
                outcome: Ok(detail),
            }),
        }
    }

    fn reject(mut self, stage: Stage, reason: impl fmt::Display) -> DemoReport {
        self.report.stages.retain(|l| l.stage != stage);
        self.report.stages.push(StageLine {
            stage,
            count: 0,
            outcome: Err(reason.to_string()),
        });
        self.report
    }
}

/// Runs the pipeline for `messages` messages with payload sizes drawn
/// from `seed`. Coefficient 1.000.
pub fn run_demo(messages: usize, seed: u64, tamper: Option<Tamper>) -> DemoReport {
    let params = epoch_params(DEFAULT_EPOCH_CAPACITY).expect("valid capacity");
    run_demo_with(&params, messages, seed, tamper)
}

pub fn run_demo_with(params: &KzgParams, messages: usize, seed: u64, tamper: Option<Tamper>) -> DemoReport {
    let coefficient = COEFFICIENT_SCALE;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let tag = seed.to_be_bytes();
    let out = KeyPair::from_seed(&[b"demo-outbound".as_slice(), &tag].concat());
    let relay = KeyPair::from_seed(&[b"demo-relay".as_slice(), &tag].concat());
    let inbound = KeyPair::from_seed(&[b"demo-inbound".as_slice(), &tag].concat());
    let room = sha256(&[b"demo-room", &tag]);
    let members = Membership::new(room, [out.address(), inbound.address()]);
    let inbound_pk = inbound.public().to_bytes();
    let relay_pk = relay.public().to_bytes();
    let key = (out.address(), relay_pk);
    let policy = ReceiptPolicy::default();
    let capacity = params.size();

    let mut tally = Tally {
        report: DemoReport {
            messages,
            ..DemoReport::default()
        },
    };
    let mut validator = CreditLedger::new();
    let mut sent_total = 0usize;

    for (epoch_no, start) in (0..messages).step_by(capacity).enumerate() {
        let end = (start + capacity).min(messages);
        let first_epoch = epoch_no == 0;
        let mut sent = OutboundLedger::new();
        let mut ledger = RelayLedger::new();
        let mut batch = InboundBatch::new(&inbound.public());
        let mut epoch = WorkloadEpoch::new(epoch_no as u64, relay_pk, capacity);
        let mut receipts = Vec::new();

        for i in start..end {
            let size = rng.gen_range(16..=1024usize);
            let payload: Vec<u8> = (0..size).map(|_| rng.gen()).collect();
            let event_id = sha256(&[b"demo-event", &tag, &(i as u64).to_be_bytes()]);
            let now = i as u64;

            let mut env = match assemble_outbound(room, event_id, payload, &out) {
                Ok(e) => e,
                Err(e) => return tally.reject(Stage::Assemble, e),
            };
            sent.insert(event_id, env.message_size);
            tally.ok(Stage::Assemble, 1, String::new());
            if tamper == Some(Tamper::Envelope) && i == 0 {
                env.message_size += 1;
            }

            let mut env = match relay_endorse(&env, &members, &relay, &inbound_pk) {
                Ok(e) => e,
                Err(e) => return tally.reject(Stage::RelayVerify, e),
            };
            ledger.record(&env).expect("endorsed envelope");
            if let Err(e) = epoch.record_relay(params, &env) {
                return tally.reject(Stage::EpochCommit, e);
            }
            tally.ok(Stage::RelayVerify, 1, String::new());
            if tamper == Some(Tamper::Endorse) && i == 0 {
                if let Some(e) = env.endorsement.as_mut() {
                    e.sig_relay[60] ^= 1;
                }
            }

            let leaf = match inbound_accept(&env, &members, &mut batch, now) {
                Ok(l) => l,
                Err(e) => return tally.reject(Stage::InboundAccept, e),
            };
            tally.report.inbound_total += leaf.message_size * coefficient;
            tally.ok(Stage::InboundAccept, 1, String::new());

            if let Some(r) = build_receipt(&mut batch, &key, &policy, now, false, coefficient, &inbound) {
                receipts.push(r);
                tally.ok(Stage::Receipt, 1, String::new());
            }
        }
        if let Some(r) = build_receipt(&mut batch, &key, &policy, end as u64, true, coefficient, &inbound) {
            receipts.push(r);
            tally.ok(Stage::Receipt, 1, String::new());
        }
        if tamper == Some(Tamper::Receipt) && first_epoch {
            receipts[0].cost_coefficient += 1;
        }
        sent_total += sent.len();
        tally.report.outbound_total += sent.values().map(|s| s * coefficient).sum::<u64>();

        let mut bill = match compile_bill(&receipts, &ledger, &out.address(), &relay) {
            Ok(b) => b,
            Err(e) => return tally.reject(Stage::BillCompile, e),
        };
        tally.report.relay_total += bill.total();
        tally.ok(Stage::BillCompile, 1, format!("lines={}", sent_total));
        if tamper == Some(Tamper::Bill) && first_epoch {
            bill = inflate_line(bill, &relay);
        }

        let bill = match outbound_endorse(&bill, &sent, &out) {
            Ok(b) => b,
            Err(e) => return tally.reject(Stage::OutboundEndorse, e),
        };
        tally.ok(Stage::OutboundEndorse, 1, String::new());
        tally.ok(
            Stage::EpochCommit,
            1,
            format!("fill={} commitment={}", epoch.fill(), hex::encode(&epoch.commitment().to_bytes()[..8])),
        );

        let mut workload = match epoch.prove_workload(params, &epoch.sample_seed()) {
            Ok(p) => p,
            Err(e) => return tally.reject(Stage::WorkloadProve, e),
        };
        tally.ok(Stage::WorkloadProve, 1, format!("samples={}", workload.proof.indices.len()));
        if tamper == Some(Tamper::Proof) && first_epoch {
            workload.proof.values[0] = crate::por::slot_digest(&[0xee; 32], &[0; 80]);
        }

        let submission = Submission { workload, bill };
        match validator.assess_por(params, &submission) {
            Ok(credited) => {
                tally.report.credited += credited;
                tally.report.submissions.push(submission.clone());
            }
            Err(e) => return tally.reject(Stage::Assess, e),
        }
        tally.ok(Stage::Assess, 1, format!("credited={}", tally.report.credited));

        if tamper == Some(Tamper::Replay) && first_epoch {
            match validator.assess_por(params, &submission) {
                Ok(_) => tally.ok(Stage::Resubmit, 1, "accepted".into()),
                Err(e) => return tally.reject(Stage::Resubmit, e),
            }
        }
    }
    tally.report
}

/// The relay raises the first line's size, recomputes the root and
/// re-signs, so only the outbound node's own log can catch it.
fn inflate_line(mut bill: crate::por::RelayBill, relay: &KeyPair) -> crate::por::RelayBill {
    bill.lines[0].message_size += 1;
    let leaves: Vec<_> = bill.lines.iter().map(|l| (l.event_id, l.message_size)).collect();
    bill.merkle_root = crate::por::merkle_root(&leaves).expect("nonempty");
    bill.relay_sig = relay.sign(&bill.relay_digest()).to_bytes();
    bill
}

/// One theft attempt on a two-relay path: the second-hop link is replaced
/// by a copy claiming a thief as signer (or carrying the first hop's
/// signature). Returns true if the inbound node rejects it.
pub fn chain_theft_rejected(seed: u64) -> bool {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let tag = seed.to_be_bytes();
    let key = |label: &[u8]| KeyPair::from_seed(&[label, &tag].concat());
    let (out, r1, r2, thief, inbound) = (key(b"o"), key(b"r1"), key(b"r2"), key(b"t"), key(b"i"));
    let room = sha256(&[b"theft", &tag]);
    let members = Membership::new(room, [out.address(), inbound.address()]);
    let payload: Vec<u8> = (0..rng.gen_range(1..256)).map(|_| rng.gen()).collect();
    let env = assemble_outbound(room, sha256(&[b"theft-event", &tag]), payload, &out).expect("payload");
    let env = relay_endorse(&env, &members, &r1, &r2.public().to_bytes()).expect("honest hop");
    let mut env = relay_endorse(&env, &members, &r2, &inbound.public().to_bytes()).expect("honest hop");
    let mut batch = InboundBatch::new(&inbound.public());
    if inbound_accept(&env.clone(), &members, &mut batch.clone(), 0).is_err() {
        return false;
    }
    match rng.gen_range(0..3) {
        0 => {
            // thief claims r2's link as its own
            env.chain[1].signer = thief.public().to_bytes();
        }
        1 => {
            // r2's slot carries r1's signature
            env.chain[1].signature = env.chain[0].signature;
        }
        _ => {
            // thief re-signs hop 1 but chains from the wrong predecessor
            let digest = chain_digest(&env.event_id, &env.sig_out, &inbound.public().to_bytes());
            let forged = thief.sign(&digest);
            env.chain[1].signer = thief.public().to_bytes();
            env.chain[1].signature = forged.to_bytes();
        }
    }
    matches!(
        inbound_accept(&env, &members, &mut batch, 0),
        Err(PorError::BadChain { .. } | PorError::BadRelaySignature | PorError::WrongNextHop)
    )
}

/// One produced block as seen by a follower.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockSummary {
    pub block: Block,
    pub refused: Vec<String>,
    pub credited: u64,
    pub verified: bool,
}

/// A short chain built from honest pipeline runs, plus one replayed
/// submission per block after the first.
#[derive(Clone, Debug)]
pub struct ChainRun {
    pub validators: Vec<(Address, u64)>,
    pub blocks: Vec<BlockSummary>,
    pub state: ChainState,
}

/// Validators get stakes 100, 200, ... and a full availability window.
/// Block `b` carries the submissions of a fresh `messages`-message run
/// seeded from `seed` and `b`.
pub fn run_chain(seed: u64, validators: usize, blocks: usize, messages: usize) -> Result<ChainRun, PoaError> {
    let params = epoch_params(DEFAULT_EPOCH_CAPACITY).expect("valid capacity");
    let tag = seed.to_be_bytes();
    let keys: Vec<KeyPair> = (0..validators as u64)
        .map(|i| KeyPair::from_seed(&[b"validator".as_slice(), &tag, &i.to_be_bytes()].concat()))
        .collect();
    let mut registry = StakeRegistry::new();
    let mut stakes = Vec::new();
    for (i, k) in keys.iter().enumerate() {
        let stake = 100 * (i as u64 + 1);
        stakes.push((registry.register_available(&k.public(), stake, AVAILABILITY_WINDOW), stake));
    }
    let mut state = ChainState::genesis(registry, sha256(&[b"chain-genesis", &tag]));
    let mut out = Vec::with_capacity(blocks);
    let mut previous: Option<Submission> = None;
    for b in 0..blocks as u64 {
        let run_seed = u64::from_be_bytes(sha256(&[b"chain-block", &tag, &b.to_be_bytes()])[..8].try_into().unwrap());
        let mut pending = run_demo_with(&params, messages, run_seed, None).submissions;
        if let Some(replayed) = previous.take() {
            pending.push(replayed);
        }
        previous = pending.first().cloned();
        let selected = state.next_validator()?;
        let validator = keys.iter().find(|k| k.address() == selected).expect("selected validator is ours");
        let reveals = collect_reveals(&state, &keys);
        let before = state.ledger.total_credited();
        let (block, next, refused) = state.produce_block(&params, validator, reveals, &pending)?;
        let verified = state.verify_block(&params, &block).is_ok_and(|f| f.state_root() == next.state_root());
        out.push(BlockSummary {
            credited: next.ledger.total_credited() - before,
            refused: refused.iter().map(|(i, r)| format!("{i}: {r}")).collect(),
            block,
            verified,
        });
        state = next;
    }
    Ok(ChainRun {
        validators: stakes,
        blocks: out,
        state,
    })
}

impl ChainRun {
    /// Text dump: validators, one paragraph per block, then every account
    /// with its Verkle proof checked against the final root.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (a, stake) in &self.validators {
            out += &format!("validator {a} stake={stake}\n");
        }
        for s in &self.blocks {
            let b = &s.block;
            out += &format!(
                "\nblock height={} digest={} parent={}\n",
                b.height,
                hex::encode(b.digest()),
                hex::encode(b.parent)
            );
            out += &format!("  validator={} reveals={}\n", b.validator, b.randao_reveals.len());
            out += &format!("  submissions={} credited={}\n", b.submissions.len(), s.credited);
            for r in &s.refused {
                out += &format!("  refused {r}\n");
            }
            out += &format!("  state_root={} verified={}\n", hex::encode(b.state_root), s.verified);
        }
        let root = self.state.state_root();
        out += &format!("\nstate height={} root={}\n", self.state.height, hex::encode(root));
        for (key, account) in self.state.accounts.accounts() {
            let proof = self.state.accounts.prove(&key);
            out += &format!(
                "account key={} balance={} nonce={} proof_levels={} proof_ok={}\n",
                hex::encode(&key[..8]),
                account.balance,
                account.nonce,
                proof.levels.len(),
                verkle_verify(&root, &key, &account, &proof)
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn honest_run_settles() {
        let r = run_demo(100, 1, None);
        assert!(r.settled(), "{}", r.trace());
        assert_eq!(r.stages.len(), 9);
        assert!(r.credited > 0);
    }

    #[test]
    fn single_message_run() {
        let r = run_demo(1, 2, None);
        assert!(r.settled(), "{}", r.trace());
        assert!(r.trace().contains("stage=workload_prove status=ok count=1 samples=1"));
    }

    #[test]
    fn every_tamper_caught_where_expected() {
        for t in Tamper::ALL {
            let r = run_demo(20, 3, Some(t));
            assert_eq!(r.rejected_at(), Some(t.detected_at()), "{}:\n{}", t.as_str(), r.trace());
        }
    }

    #[test]
    fn multi_epoch_run_settles() {
        let params = epoch_params(8).unwrap();
        let r = run_demo_with(&params, 20, 4, None);
        assert!(r.settled(), "{}", r.trace());
        assert!(r.trace().contains("stage=assess status=ok count=3"));
    }

    #[test]
    fn theft_attempts_rejected() {
        assert!((0..12).all(chain_theft_rejected));
    }

    #[test]
    fn chain_refuses_replays_and_followers_agree() {
        let run = run_chain(4, 3, 3, 20).unwrap();
        assert_eq!(run.blocks.len(), 3);
        assert!(run.blocks.iter().all(|b| b.verified));
        assert!(run.blocks[0].refused.is_empty());
        for b in &run.blocks[1..] {
            assert_eq!(b.refused.len(), 1);
            assert!(b.refused[0].contains("double credit"), "{}", b.refused[0]);
        }
        let dump = run.dump();
        assert!(!dump.contains("proof_ok=false"));
        assert_eq!(dump, run_chain(4, 3, 3, 20).unwrap().dump());
    }
}
