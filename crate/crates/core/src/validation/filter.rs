use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::identity::NodeId;
use crate::ledger::Transaction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IllegalReason {
    SelfDetection,
    Unacknowledged,
}

/// Indices into the filtered list.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FilterOutcome {
    pub kept: Vec<usize>,
    pub rejected: Vec<(usize, IllegalReason)>,
}

/// Drops self-detections and every transaction whose swapped counterpart
/// (detected -> sender) is missing from the same list.
pub fn filter_illegal(txs: &[Transaction]) -> FilterOutcome {
    let pairs: HashSet<(NodeId, NodeId)> = txs.iter().map(|tx| (tx.sender, tx.detected)).collect();
    let mut out = FilterOutcome::default();
    for (idx, tx) in txs.iter().enumerate() {
        if tx.is_self_detection() {
            out.rejected.push((idx, IllegalReason::SelfDetection));
        } else if !pairs.contains(&(tx.detected, tx.sender)) {
            out.rejected.push((idx, IllegalReason::Unacknowledged));
        } else {
            out.kept.push(idx);
        }
    }
    out
}
