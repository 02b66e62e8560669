use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::geometry::Position;
use crate::identity::NodeId;
use crate::ledger::{map_entries, Millis, ReputationTable, Transaction};

use super::ValidationParams;

/// Lost-conflict counters and the resulting blacklist.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictLedger {
    #[serde(with = "map_entries")]
    lost_conflicts: BTreeMap<NodeId, u32>,
    blacklist: BTreeSet<NodeId>,
}

impl ConflictLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lost(&self, node: &NodeId) -> u32 {
        self.lost_conflicts.get(node).copied().unwrap_or(0)
    }

    pub fn is_blacklisted(&self, node: &NodeId) -> bool {
        self.blacklist.contains(node)
    }

    pub fn blacklist(&self) -> &BTreeSet<NodeId> {
        &self.blacklist
    }

    pub fn lost_conflicts(&self) -> &BTreeMap<NodeId, u32> {
        &self.lost_conflicts
    }

    /// Records one more lost conflict; returns true when this pushes the
    /// participant past `tolerance` for the first time.
    pub fn record_loss(&mut self, node: NodeId, tolerance: u32) -> bool {
        let lost = self.lost_conflicts.entry(node).or_default();
        *lost += 1;
        *lost > tolerance && self.blacklist.insert(node)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConflictReport {
    pub ledger: ConflictLedger,
    pub penalties: BTreeMap<NodeId, u32>,
    pub newly_blacklisted: Vec<NodeId>,
    /// (winner, loser) per conflicting pair.
    pub conflicts: Vec<(NodeId, NodeId)>,
}

fn unordered(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Finds pairs of senders that claim nearby positions at (nearly) the same
/// time without any accepted transaction between them. For each such pair
/// the lower-reputation participant loses (lower id on ties).
pub fn detect_conflicts(
    accepted: &[&Transaction],
    reputations: &ReputationTable,
    ledger: &ConflictLedger,
    params: &ValidationParams,
) -> ConflictReport {
    let detections: HashSet<(NodeId, NodeId)> = accepted
        .iter()
        .map(|tx| unordered(tx.sender, tx.detected))
        .collect();

    let mut claims: Vec<(Millis, NodeId, Position)> = accepted
        .iter()
        .map(|tx| (tx.timestamp, tx.sender, tx.position))
        .collect();
    claims.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    claims.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1 && a.2 == b.2);

    let mut pairs = BTreeSet::new();
    for (i, (t_a, a, pos_a)) in claims.iter().enumerate() {
        for (t_b, b, pos_b) in &claims[i + 1..] {
            if t_b - t_a > params.conflict_window_ms {
                break;
            }
            if a == b || pos_a.distance(pos_b) > params.conflict_distance {
                continue;
            }
            let pair = unordered(*a, *b);
            if !detections.contains(&pair) {
                pairs.insert(pair);
            }
        }
    }

    let mut report = ConflictReport {
        ledger: ledger.clone(),
        ..Default::default()
    };
    for (a, b) in pairs {
        // pair is ordered, so `a` has the lower id and loses ties
        let (winner, loser) = if reputations.get(&b) < reputations.get(&a) {
            (a, b)
        } else {
            (b, a)
        };
        report.conflicts.push((winner, loser));
        *report.penalties.entry(loser).or_default() += 1;
        if report
            .ledger
            .record_loss(loser, params.tolerable_lost_conflicts)
        {
            report.newly_blacklisted.push(loser);
        }
    }
    report
}
