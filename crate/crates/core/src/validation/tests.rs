use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use super::*;
use crate::crypto::Signature;
use crate::geometry::Position;
use crate::identity::NodeKind;

fn node(i: u8) -> NodeId {
    NodeId::new([i; 32], NodeKind::Vehicle)
}

// validation never looks at signatures
fn tx(a: u8, b: u8, x: f64, y: f64, t: u64) -> Transaction {
    Transaction {
        sender: node(a),
        detected: node(b),
        position: Position::new(x, y),
        timestamp: t,
        signature: Signature::ZERO,
    }
}

fn table(entries: &[(u8, u64)]) -> ReputationTable {
    entries.iter().map(|&(i, s)| (node(i), s)).collect()
}

fn block_of(txs: Vec<Transaction>, height: u64) -> Block {
    let tags = vec![ValidityTag::Valid; txs.len()];
    Block {
        height,
        prev_hash: crate::crypto::Hash32::ZERO,
        attempt: 1,
        timestamp: 0,
        harvester: node(0),
        harvester_signature: Signature::ZERO,
        transactions: txs,
        validity_tags: tags,
        reputation_table: ReputationTable::new(),
        activity_flags: ActivityFlags::new(),
        approvals: Vec::new(),
    }
}

#[test]
fn filter_rejects_self_detection() {
    let out = filter_illegal(&[tx(1, 1, 0.0, 0.0, 0)]);
    assert_eq!(out.rejected, vec![(0, IllegalReason::SelfDetection)]);
    assert!(out.kept.is_empty());
}

#[test]
fn filter_keeps_reciprocal_pair() {
    let out = filter_illegal(&[tx(1, 2, 0.0, 0.0, 0), tx(2, 1, 3.0, 0.0, 0)]);
    assert_eq!(out.kept, vec![0, 1]);
    assert!(out.rejected.is_empty());
}

#[test]
fn filter_rejects_unacknowledged() {
    let out = filter_illegal(&[tx(1, 2, 0.0, 0.0, 0)]);
    assert_eq!(out.rejected, vec![(0, IllegalReason::Unacknowledged)]);
}

#[test]
fn travel_bounds() {
    let p = ValidationParams::default();
    assert_eq!(travel_bound(BoundKind::SenderSender, 0.0, &p), 0.0);
    let ds = travel_bound(BoundKind::DetectedSender, 60.0, &p);
    assert!((ds - 2181.6667).abs() < 1e-3, "{ds}");
    assert_eq!(travel_bound(BoundKind::DetectedDetected, 0.0, &p), 30.0);
    assert_eq!(
        travel_bound(BoundKind::SenderDetected, 10.0, &p),
        travel_bound(BoundKind::DetectedSender, 10.0, &p)
    );
}

#[test]
fn score_without_history_is_no_evidence() {
    let p = ValidationParams::default();
    let s = score_transaction(&tx(1, 2, 0.0, 0.0, 0), &History::default(), &table(&[]), &p);
    assert_eq!(s, TxScore::NoEvidence);
}

#[test]
fn score_single_supporting_check() {
    let p = ValidationParams::default();
    // node 9 saw node 1 a minute ago; node 1 now claims a nearby spot
    let history = History::from_transactions([tx(9, 1, 0.0, 0.0, 0)]);
    let reps = table(&[(9, 64)]);
    let s = score_transaction(&tx(1, 2, 100.0, 0.0, 60_000), &history, &reps, &p);
    assert_eq!(s, TxScore::Accept { normalized: 64.0, checks: 1 });
}

#[test]
fn score_single_violated_check() {
    let p = ValidationParams::default();
    let history = History::from_transactions([tx(9, 1, 0.0, 0.0, 0)]);
    let reps = table(&[(9, 64)]);
    let s = score_transaction(&tx(1, 2, 10_000.0, 0.0, 60_000), &history, &reps, &p);
    assert_eq!(s, TxScore::Reject { normalized: -64.0, checks: 1 });
}

#[test]
fn score_counts_both_participants() {
    let p = ValidationParams::default();
    let history = History::from_transactions([tx(1, 5, 0.0, 0.0, 0), tx(6, 2, 0.0, 0.0, 0)]);
    let reps = table(&[(1, 100), (6, 300)]);
    // 50 m away: the SS bound (36.1 m) fails, the DD bound (66.1 m) holds
    let s = score_transaction(&tx(1, 2, 30.0, 40.0, 1_000), &history, &reps, &p);
    assert_eq!(s, TxScore::Accept { normalized: (-100.0 + 300.0) / 2.0, checks: 2 });
    let s = score_transaction(&tx(1, 2, 60.0, 80.0, 1_000), &history, &reps, &p);
    assert_eq!(s, TxScore::Reject { normalized: (-100.0 - 300.0) / 2.0, checks: 2 });
}

#[test]
fn conflict_lower_reputation_loses() {
    let p = ValidationParams::default();
    let a = tx(1, 3, 0.0, 0.0, 0);
    let b = tx(2, 4, 5.0, 0.0, 0);
    let reps = table(&[(1, 64), (2, 256)]);
    let report = detect_conflicts(&[&a, &b], &reps, &ConflictLedger::new(), &p);
    assert_eq!(report.conflicts, vec![(node(2), node(1))]);
    assert_eq!(report.penalties, BTreeMap::from([(node(1), 1)]));
    assert_eq!(report.ledger.lost(&node(1)), 1);
}

#[test]
fn conflict_tie_lower_id_loses() {
    let p = ValidationParams::default();
    let a = tx(7, 3, 0.0, 0.0, 0);
    let b = tx(2, 4, 5.0, 0.0, 0);
    let reps = table(&[(7, 64), (2, 64)]);
    let report = detect_conflicts(&[&a, &b], &reps, &ConflictLedger::new(), &p);
    assert_eq!(report.conflicts, vec![(node(7), node(2))]);
}

#[test]
fn mutual_detection_is_no_conflict() {
    let p = ValidationParams::default();
    let a = tx(1, 2, 0.0, 0.0, 0);
    let b = tx(2, 1, 5.0, 0.0, 0);
    let report = detect_conflicts(&[&a, &b], &table(&[(1, 64), (2, 256)]), &ConflictLedger::new(), &p);
    assert!(report.conflicts.is_empty());
    assert!(report.penalties.is_empty());
}

#[test]
fn distant_or_asynchronous_claims_do_not_conflict() {
    let p = ValidationParams::default();
    let reps = table(&[(1, 64), (2, 256)]);
    let far = [tx(1, 3, 0.0, 0.0, 0), tx(2, 4, 15.5, 0.0, 0)];
    let report = detect_conflicts(&[&far[0], &far[1]], &reps, &ConflictLedger::new(), &p);
    assert!(report.conflicts.is_empty());
    let later = [tx(1, 3, 0.0, 0.0, 0), tx(2, 4, 5.0, 0.0, 10_000)];
    let report = detect_conflicts(&[&later[0], &later[1]], &reps, &ConflictLedger::new(), &p);
    assert!(report.conflicts.is_empty());
}

#[test]
fn third_lost_conflict_blacklists_and_retags() {
    let p = ValidationParams::default();
    let mut ledger = ConflictLedger::new();
    assert!(!ledger.record_loss(node(1), 2));
    assert!(!ledger.record_loss(node(1), 2));
    assert!(!ledger.is_blacklisted(&node(1)));

    // 1 <-> 3 and 2 <-> 4 are reciprocal; only 1 and 2 claim close spots
    let candidate = vec![
        tx(1, 3, 0.0, 0.0, 0),
        tx(3, 1, -8.0, 0.0, 0),
        tx(2, 4, 10.0, 0.0, 0),
        tx(4, 2, 20.0, 0.0, 0),
    ];
    let reps = table(&[(1, 64), (2, 4096), (3, 4096), (4, 4096)]);
    let out = validate_with_history(&candidate, &[], &reps, &ledger, &p);
    assert!(out.ledger.is_blacklisted(&node(1)));
    assert_eq!(out.verdicts[0], TxVerdict::Blacklisted);
    assert_eq!(out.validity_tags[0], ValidityTag::Blacklisted);
    assert_eq!(out.ledger.lost(&node(1)), 3);
}

#[test]
fn blacklisted_sender_stays_tagged() {
    let p = ValidationParams::default();
    let mut ledger = ConflictLedger::new();
    for _ in 0..3 {
        ledger.record_loss(node(1), 2);
    }
    let candidate = vec![tx(1, 2, 0.0, 0.0, 0), tx(2, 1, 1.0, 0.0, 0)];
    let out = validate_with_history(&candidate, &[], &table(&[(1, 64), (2, 64)]), &ledger, &p);
    assert_eq!(out.validity_tags, vec![ValidityTag::Blacklisted, ValidityTag::Valid]);
}

#[test]
fn scaling_factor_cases() {
    let s = |v: &[u8]| v.iter().map(|&i| node(i)).collect::<BTreeSet<_>>();
    assert_eq!(scaling_factor(&s(&[1, 2]), &s(&[3, 4]), 0.67), 1.0);
    assert!((scaling_factor(&s(&[1, 2, 3]), &s(&[1, 2]), 0.67) - 0.33).abs() < 1e-12);
    assert_eq!(scaling_factor(&s(&[1, 2]), &s(&[1, 2]), 0.0), 1.0);
    assert_eq!(scaling_factor(&s(&[1]), &s(&[]), 0.67), 1.0);
}

fn update_one(old: u64, tags: &[ValidityTag]) -> u64 {
    let p = ValidationParams::default();
    let txs: Vec<Transaction> = (0..tags.len()).map(|i| tx(1, 10 + i as u8, 0.0, 0.0, 0)).collect();
    let out = update_reputations(
        &txs,
        tags,
        &BTreeMap::new(),
        &NeighborHistory::default(),
        &table(&[(1, old)]),
        &p,
    );
    out.reputations.get(&node(1))
}

#[test]
fn reputation_update_examples() {
    assert_eq!(update_one(64, &[ValidityTag::Valid]), 320);
    assert_eq!(update_one(64, &[ValidityTag::Rejected]), 0);
    assert_eq!(update_one(4096, &[ValidityTag::Valid; 10]), 4096);
}

#[test]
fn reward_rounds_half_up() {
    let p = ValidationParams {
        variance_weight: 0.5,
        base_reward: 3,
        ..ValidationParams::default()
    };
    // S_f = 1 - 0.5 * 1/1 = 0.5, reward = round(3 * 1 * 0.5) = round(1.5) = 2
    let prior = NeighborHistory::from_blocks(&[block_of(vec![tx(1, 2, 0.0, 0.0, 0)], 1)]);
    let out = update_reputations(
        &[tx(1, 2, 0.0, 0.0, 60_000)],
        &[ValidityTag::Valid],
        &BTreeMap::new(),
        &prior,
        &table(&[(1, 10), (2, 10)]),
        &p,
    );
    assert_eq!(out.reputations.get(&node(1)), 12);
}

#[test]
fn idle_participants_decay() {
    let p = ValidationParams::default();
    let out = validate_with_history(&[], &[], &table(&[(1, 100), (2, 30)]), &ConflictLedger::new(), &p);
    assert!(out.validity_tags.is_empty());
    assert_eq!(out.reputation_table, table(&[(1, 36), (2, 0)]));
    assert!(!out.activity_flags.get(&node(1)));
}

#[test]
fn lost_conflict_costs_one_penalty() {
    let p = ValidationParams::default();
    let out = update_reputations(
        &[tx(1, 2, 0.0, 0.0, 0)],
        &[ValidityTag::Valid],
        &BTreeMap::from([(node(1), 1)]),
        &NeighborHistory::default(),
        &table(&[(1, 1000), (2, 64)]),
        &p,
    );
    assert_eq!(out.reputations.get(&node(1)), 1000 + 256 - 512);
    assert!(out.activity.get(&node(1)));
}

#[test]
fn honest_block_is_fully_accepted() {
    let p = ValidationParams::default();
    let history = vec![block_of(vec![tx(1, 2, 0.0, 0.0, 0), tx(2, 1, 4.0, 0.0, 0)], 1)];
    let candidate = vec![tx(1, 2, 50.0, 0.0, 60_000), tx(2, 1, 54.0, 0.0, 60_000)];
    let reps = table(&[(1, 320), (2, 320)]);
    let out = validate_with_history(&candidate, &history, &reps, &ConflictLedger::new(), &p);
    assert_eq!(out.verdicts, vec![TxVerdict::Accepted; 2]);
    assert!(out.activity_flags.get(&node(1)) && out.activity_flags.get(&node(2)));
}

#[test]
fn replayed_transaction_is_unacknowledged() {
    let p = ValidationParams::default();
    // node 9 copies node 1's detection of node 2 under its own identity
    let candidate = vec![tx(1, 2, 0.0, 0.0, 0), tx(2, 1, 4.0, 0.0, 0), tx(9, 2, 0.0, 0.0, 0)];
    let out = validate_with_history(&candidate, &[], &table(&[]), &ConflictLedger::new(), &p);
    assert_eq!(out.verdicts[2], TxVerdict::Unacknowledged);
    assert_eq!(out.validity_tags[2], ValidityTag::Rejected);
}

#[test]
fn newcomers_join_with_initial_reputation() {
    let p = ValidationParams::default();
    let candidate = vec![tx(1, 2, 0.0, 0.0, 0), tx(2, 1, 4.0, 0.0, 0)];
    let out = validate_with_history(&candidate, &[], &table(&[]), &ConflictLedger::new(), &p);
    assert_eq!(out.reputation_table, table(&[(1, 320), (2, 320)]));
}

fn arb_tags(n: usize) -> impl Strategy<Value = Vec<ValidityTag>> {
    prop::collection::vec(
        prop_oneof![
            Just(ValidityTag::Valid),
            Just(ValidityTag::Rejected),
            Just(ValidityTag::Blacklisted)
        ],
        n,
    )
}

fn arb_block() -> impl Strategy<Value = Vec<Transaction>> {
    prop::collection::vec(
        (1u8..6, 1u8..6, 0.0f64..40.0, 0.0f64..40.0, 0u64..3).prop_map(|(a, b, x, y, t)| tx(a, b, x, y, t * 1000)),
        0..16,
    )
}

proptest! {
    #[test]
    fn reputations_stay_in_range(
        (txs, tags) in (1usize..12).prop_flat_map(|n| (
            prop::collection::vec((1u8..5, 1u8..5), n).prop_map(|v| v.into_iter().map(|(a, b)| tx(a, b, 0.0, 0.0, 0)).collect::<Vec<_>>()),
            arb_tags(n),
        )),
        olds in prop::collection::vec(0u64..=4096, 4),
        w in 0.0f64..=1.0,
    ) {
        let p = ValidationParams { variance_weight: w, ..ValidationParams::default() };
        let reps: ReputationTable = olds.iter().enumerate().map(|(i, &s)| (node(i as u8 + 1), s)).collect();
        let prior = NeighborHistory::from_blocks(&[block_of(txs.clone(), 1)]);
        let out = update_reputations(&txs, &tags, &BTreeMap::new(), &prior, &reps, &p);
        for (_, &s) in out.reputations.iter() {
            prop_assert!(s <= p.max_reputation);
        }
    }

    #[test]
    fn extra_rejection_never_helps(
        old in 0u64..=4096,
        valid in 0usize..6,
        rejected in 0usize..6,
    ) {
        let mut tags = vec![ValidityTag::Valid; valid];
        tags.extend(vec![ValidityTag::Rejected; rejected]);
        let before = update_one(old, &tags);
        tags.push(ValidityTag::Rejected);
        prop_assert!(update_one(old, &tags) <= before);
    }

    #[test]
    fn scaling_factor_bounds(
        new in prop::collection::btree_set(0u8..10, 0..8),
        old in prop::collection::btree_set(0u8..10, 0..8),
        w in 0.0f64..=1.0,
    ) {
        let new: BTreeSet<NodeId> = new.into_iter().map(node).collect();
        let old: BTreeSet<NodeId> = old.into_iter().map(node).collect();
        let s = scaling_factor(&new, &old, w);
        prop_assert!(s >= 1.0 - w - 1e-12 && s <= 1.0);
        if old.is_empty() {
            prop_assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn pipeline_invariants(
        history in arb_block(),
        candidate in arb_block(),
        lost in prop::collection::vec(0u32..4, 5),
    ) {
        let p = ValidationParams::default();
        let mut ledger = ConflictLedger::new();
        for (i, &n) in lost.iter().enumerate() {
            for _ in 0..n {
                ledger.record_loss(node(i as u8 + 1), p.tolerable_lost_conflicts);
            }
        }
        let reps = table(&[(1, 64), (2, 500), (3, 4096), (4, 0), (5, 1000)]);
        let recent = [block_of(history, 1)];
        let out = validate_with_history(&candidate, &recent, &reps, &ledger, &p);
        let again = validate_with_history(&candidate, &recent, &reps, &ledger, &p);
        prop_assert_eq!(&out, &again);

        for (tx, tag) in candidate.iter().zip(&out.validity_tags) {
            if tx.is_self_detection() {
                prop_assert_ne!(*tag, ValidityTag::Valid);
            }
        }
        for (id, &n) in out.ledger.lost_conflicts() {
            prop_assert_eq!(out.ledger.is_blacklisted(id), n > p.tolerable_lost_conflicts);
        }
        for id in out.ledger.blacklist() {
            prop_assert!(out.ledger.lost(id) > p.tolerable_lost_conflicts);
        }
        for (_, &s) in out.reputation_table.iter() {
            prop_assert!(s <= p.max_reputation);
        }
    }
}
