use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::identity::NodeId;
use crate::ledger::{Block, ReputationTable, Transaction};

use super::ValidationParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Sender,
    Detected,
}

/// Which travel bound applies, named by the participant's role in the old
/// transaction and then in the new one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundKind {
    SenderSender,
    SenderDetected,
    DetectedSender,
    DetectedDetected,
}

impl BoundKind {
    pub fn from_roles(old: Role, new: Role) -> Self {
        match (old, new) {
            (Role::Sender, Role::Sender) => BoundKind::SenderSender,
            (Role::Sender, Role::Detected) => BoundKind::SenderDetected,
            (Role::Detected, Role::Sender) => BoundKind::DetectedSender,
            (Role::Detected, Role::Detected) => BoundKind::DetectedDetected,
        }
    }

    /// Number of detection-radius offsets the bound allows for; a detected
    /// node is only known to be within range of its sender.
    pub fn range_offsets(self) -> f64 {
        match self {
            BoundKind::SenderSender => 0.0,
            BoundKind::SenderDetected | BoundKind::DetectedSender => 1.0,
            BoundKind::DetectedDetected => 2.0,
        }
    }
}

/// Largest plausible distance between the two sender positions after
/// `dt_secs` seconds of straight-line travel at `v_max`.
pub fn travel_bound(kind: BoundKind, dt_secs: f64, params: &ValidationParams) -> f64 {
    params.v_max * dt_secs + kind.range_offsets() * params.range_max
}

/// Accepted transactions of recent blocks, indexed by participant.
#[derive(Clone, Debug, Default)]
pub struct History {
    txs: Vec<Transaction>,
    index: HashMap<NodeId, Vec<(usize, Role)>>,
}

impl History {
    pub fn from_blocks(blocks: &[Block]) -> Self {
        Self::from_transactions(blocks.iter().flat_map(|b| b.valid_transactions().cloned()))
    }

    pub fn from_transactions(txs: impl IntoIterator<Item = Transaction>) -> Self {
        let txs: Vec<Transaction> = txs.into_iter().collect();
        let mut index: HashMap<NodeId, Vec<(usize, Role)>> = HashMap::new();
        for (idx, tx) in txs.iter().enumerate() {
            index.entry(tx.sender).or_default().push((idx, Role::Sender));
            index.entry(tx.detected).or_default().push((idx, Role::Detected));
        }
        History { txs, index }
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.txs
    }

    pub fn len(&self) -> usize {
        self.txs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txs.is_empty()
    }

    fn appearances(&self, node: &NodeId) -> &[(usize, Role)] {
        self.index.get(node).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TxScore {
    Accept { normalized: f64, checks: usize },
    Reject { normalized: f64, checks: usize },
    /// No historical transaction shares a participant with this one.
    NoEvidence,
}

/// Scores `tx` against every historical transaction that shares a
/// participant with it. Each check adds the old sender's reputation when the
/// travel bound holds and subtracts it otherwise; the sum is normalized by
/// the number of checks and compared with the threshold.
pub fn score_transaction(
    tx: &Transaction,
    history: &History,
    reputations: &ReputationTable,
    params: &ValidationParams,
) -> TxScore {
    let mut score: i64 = 0;
    let mut checks = 0usize;
    for (participant, new_role) in [(tx.sender, Role::Sender), (tx.detected, Role::Detected)] {
        for &(idx, old_role) in history.appearances(&participant) {
            let old = &history.txs[idx];
            let kind = BoundKind::from_roles(old_role, new_role);
            let dt = tx.timestamp.abs_diff(old.timestamp) as f64 / 1000.0;
            let weight = reputations.get(&old.sender) as i64;
            if old.position.distance(&tx.position) <= travel_bound(kind, dt, params) {
                score += weight;
            } else {
                score -= weight;
            }
            checks += 1;
        }
    }
    if checks == 0 {
        return TxScore::NoEvidence;
    }
    let normalized = score as f64 / checks as f64;
    if normalized >= params.threshold {
        TxScore::Accept { normalized, checks }
    } else {
        TxScore::Reject { normalized, checks }
    }
}
