use proptest::prelude::*;

use sendnet::pipeline::{chain_theft_rejected, run_chain, run_demo, Tamper};
use sendnet::poa::{verkle_verify, verkle_verify_absent, Account, CreditLedger, Rejection, VerkleTree};
use sendnet::por::{epoch_params, DEFAULT_EPOCH_CAPACITY};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn honest_runs_settle_and_replays_are_refused(messages in 1usize..200, seed: u64) {
        let r = run_demo(messages, seed, None);
        prop_assert!(r.settled(), "{}", r.trace());
        prop_assert_eq!(r.outbound_total, r.relay_total);
        prop_assert_eq!(r.relay_total, r.inbound_total);
        prop_assert_eq!(r.inbound_total, r.credited);

        let params = epoch_params(DEFAULT_EPOCH_CAPACITY).unwrap();
        let mut ledger = CreditLedger::new();
        for s in &r.submissions {
            prop_assert!(ledger.assess_por(&params, s).is_ok());
        }
        for s in &r.submissions {
            let replay = ledger.assess_por(&params, s);
            prop_assert!(matches!(replay, Err(Rejection::DoubleCredit(_))), "{:?}", replay);
        }
    }

    #[test]
    fn tampers_are_caught_where_injected(messages in 2usize..60, seed: u64, which in 0usize..6) {
        let t = Tamper::ALL[which];
        let r = run_demo(messages, seed, Some(t));
        prop_assert_eq!(r.rejected_at(), Some(t.detected_at()));
    }

    #[test]
    fn theft_is_rejected(seed: u64) {
        prop_assert!(chain_theft_rejected(seed));
    }

    #[test]
    fn verkle_proofs_track_a_plain_map(entries in prop::collection::btree_map(any::<[u8; 32]>(), (any::<u64>(), any::<u64>()), 1..40), probe: [u8; 32]) {
        let mut tree = VerkleTree::new();
        for (k, &(balance, nonce)) in &entries {
            tree.update(*k, Account { balance, nonce });
        }
        let root = tree.root();
        for (k, &(balance, nonce)) in &entries {
            let acct = Account { balance, nonce };
            prop_assert_eq!(tree.get(k), Some(&acct));
            let p = tree.prove(k);
            prop_assert!(verkle_verify(&root, k, &acct, &p));
            let wrong = Account { balance: balance.wrapping_add(1), nonce };
            prop_assert!(!verkle_verify(&root, k, &wrong, &p));
        }
        if !entries.contains_key(&probe) {
            prop_assert!(verkle_verify_absent(&root, &probe, &tree.prove(&probe)));
        }
    }
}

#[test]
fn chain_followers_agree_and_refuse_replays() {
    let chain = run_chain(11, 3, 3, 20).unwrap();
    assert!(chain.blocks.iter().all(|b| b.verified));
    assert_eq!(chain.blocks.iter().map(|b| b.refused.len()).sum::<usize>(), 2);
    assert!(chain.blocks[1..].iter().all(|b| b.refused[0].contains("double credit")));
    assert_eq!(chain.state.height, 3);
    assert_eq!(chain.dump(), run_chain(11, 3, 3, 20).unwrap().dump());
}
