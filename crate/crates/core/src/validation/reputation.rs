use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::identity::NodeId;
use crate::ledger::{ActivityFlags, Block, ReputationTable, Transaction, ValidityTag};

use super::ValidationParams;

/// Who each participant detected over recent blocks (accepted transactions).
#[derive(Clone, Debug, Default)]
pub struct NeighborHistory {
    seen: HashMap<NodeId, BTreeSet<NodeId>>,
}

impl NeighborHistory {
    pub fn from_blocks(blocks: &[Block]) -> Self {
        let mut seen: HashMap<NodeId, BTreeSet<NodeId>> = HashMap::new();
        for tx in blocks.iter().flat_map(|b| b.valid_transactions()) {
            seen.entry(tx.sender).or_default().insert(tx.detected);
        }
        NeighborHistory { seen }
    }

    pub fn of(&self, node: &NodeId) -> Option<&BTreeSet<NodeId>> {
        self.seen.get(node)
    }
}

/// `1 - w * |new ∩ old| / |old|`, or 1 when there is no prior neighbor.
pub fn scaling_factor(new: &BTreeSet<NodeId>, old: &BTreeSet<NodeId>, w: f64) -> f64 {
    if old.is_empty() {
        return 1.0;
    }
    let overlap = new.intersection(old).count() as f64;
    1.0 - w * overlap / old.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReputationUpdate {
    pub reputations: ReputationTable,
    pub activity: ActivityFlags,
}

#[derive(Default)]
struct Tally {
    accepted: u64,
    rejected: u64,
    sent: bool,
    detected: BTreeSet<NodeId>,
}

/// Applies rewards and penalties for one block.
///
/// A participant that sent at least one transaction (or lost a conflict)
/// gets `old + round(base_reward * accepted * S_f) - base_penalty * rejected`
/// where lost conflicts count as rejected transactions. Everyone else
/// decays by `inactivity_decay`. Scores are clamped to
/// `[0, max_reputation]`; a participant is active iff it has an accepted
/// transaction.
pub fn update_reputations(
    txs: &[Transaction],
    tags: &[ValidityTag],
    penalties: &BTreeMap<NodeId, u32>,
    neighbors: &NeighborHistory,
    reputations: &ReputationTable,
    params: &ValidationParams,
) -> ReputationUpdate {
    let mut tallies: BTreeMap<NodeId, Tally> = BTreeMap::new();
    for (tx, tag) in txs.iter().zip(tags) {
        let tally = tallies.entry(tx.sender).or_default();
        tally.sent = true;
        match tag {
            ValidityTag::Valid => {
                tally.accepted += 1;
                tally.detected.insert(tx.detected);
            }
            ValidityTag::Rejected | ValidityTag::Blacklisted => tally.rejected += 1,
        }
    }
    for (node, &lost) in penalties {
        tallies.entry(*node).or_default().rejected += lost as u64;
    }

    let empty = BTreeSet::new();
    let max = params.max_reputation as i128;
    let mut out = ReputationTable::new();
    let mut activity = ActivityFlags::new();
    for (node, &old) in reputations.iter() {
        let score = match tallies.get(node) {
            Some(t) if t.sent || t.rejected > 0 => {
                let prior = neighbors.of(node).unwrap_or(&empty);
                let sf = scaling_factor(&t.detected, prior, params.variance_weight);
                let reward = (params.base_reward as f64 * t.accepted as f64 * sf + 0.5).floor();
                let penalty = params.base_penalty as i128 * t.rejected as i128;
                (old as i128 + reward as i128 - penalty).clamp(0, max)
            }
            _ => (old as i128 - params.inactivity_decay as i128).clamp(0, max),
        };
        out.set(*node, score as u64);
        activity.set(*node, tallies.get(node).is_some_and(|t| t.accepted > 0));
    }
    ReputationUpdate {
        reputations: out,
        activity,
    }
}
