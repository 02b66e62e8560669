//! Block validation: illegal-transaction filtering, physical plausibility
//! scoring against recent history, conflict penalization and the
//! reputation update.
//!
//! The pipeline is deterministic. Every supporter runs [`validate_block`] on
//! the candidate's transactions and compares the result with what the
//! harvester wrote into the block.

mod conflicts;
mod filter;
mod reputation;
mod scoring;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::consensus::BlockVerdict;
use crate::identity::NodeId;
use crate::ledger::{ActivityFlags, Block, Blockchain, ReputationTable, Transaction, ValidityTag};

pub use conflicts::{detect_conflicts, ConflictLedger, ConflictReport};
pub use filter::{filter_illegal, FilterOutcome, IllegalReason};
pub use reputation::{scaling_factor, update_reputations, NeighborHistory, ReputationUpdate};
pub use scoring::{score_transaction, travel_bound, BoundKind, History, Role, TxScore};

/// Tuning knobs of the validation heuristics and the reward system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationParams {
    /// Blocks of history consulted by the plausibility check.
    pub n_prev_blocks: usize,
    pub threshold: f64,
    /// Maximum speed in m/s.
    pub v_max: f64,
    /// Detection radius in meters.
    pub range_max: f64,
    pub variance_weight: f64,
    pub tolerable_lost_conflicts: u32,
    pub base_reward: u64,
    pub base_penalty: u64,
    pub initial_reputation: u64,
    pub max_reputation: u64,
    /// Blocks of history used for the neighbor scaling factor.
    pub neighbor_history_blocks: usize,
    pub conflict_distance: f64,
    /// Two position claims are compared for conflicts only when their
    /// timestamps are at most this far apart (milliseconds).
    pub conflict_window_ms: u64,
    /// Reputation lost per block by participants that sent nothing.
    pub inactivity_decay: u64,
}

impl Default for ValidationParams {
    fn default() -> Self {
        ValidationParams {
            n_prev_blocks: 3,
            threshold: 0.1,
            v_max: 130.0 / 3.6,
            range_max: 15.0,
            variance_weight: 0.67,
            tolerable_lost_conflicts: 2,
            base_reward: 256,
            base_penalty: 512,
            initial_reputation: 64,
            max_reputation: 4096,
            neighbor_history_blocks: 3,
            conflict_distance: 15.0,
            conflict_window_ms: 0,
            inactivity_decay: 64,
        }
    }
}

impl ValidationParams {
    pub fn check(&self) -> crate::Result<()> {
        let bad = |m: &str| Err(crate::Error::config(m));
        if self.threshold.is_nan() || self.threshold < 0.0 {
            return bad("threshold must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.variance_weight) {
            return bad("variance_weight must lie in [0, 1]");
        }
        if !(self.v_max >= 0.0 && self.v_max.is_finite()) {
            return bad("max speed must be finite and >= 0");
        }
        if !(self.range_max >= 0.0 && self.conflict_distance >= 0.0) {
            return bad("ranges must be >= 0");
        }
        if self.initial_reputation > self.max_reputation {
            return bad("initial_reputation exceeds max_reputation");
        }
        Ok(())
    }
}

/// Fine-grained outcome for one candidate transaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxVerdict {
    Accepted,
    NoEvidence,
    SelfDetection,
    Unacknowledged,
    Implausible,
    Blacklisted,
}

impl TxVerdict {
    pub fn tag(self) -> ValidityTag {
        match self {
            TxVerdict::Accepted | TxVerdict::NoEvidence => ValidityTag::Valid,
            TxVerdict::SelfDetection | TxVerdict::Unacknowledged | TxVerdict::Implausible => {
                ValidityTag::Rejected
            }
            TxVerdict::Blacklisted => ValidityTag::Blacklisted,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationOutcome {
    pub verdicts: Vec<TxVerdict>,
    pub validity_tags: Vec<ValidityTag>,
    pub reputation_table: ReputationTable,
    pub activity_flags: ActivityFlags,
    pub ledger: ConflictLedger,
    /// Conflicts lost in this block, per participant.
    pub penalties: BTreeMap<NodeId, u32>,
}

impl ValidationOutcome {
    pub fn verdict(&self) -> BlockVerdict {
        BlockVerdict {
            validity_tags: self.validity_tags.clone(),
            reputation_table: self.reputation_table.clone(),
            activity_flags: self.activity_flags.clone(),
        }
    }
}

/// Validates `candidate` against the tip of `chain`.
pub fn validate_block(
    candidate: &[Transaction],
    chain: &Blockchain,
    reputations: &ReputationTable,
    ledger: &ConflictLedger,
    params: &ValidationParams,
) -> ValidationOutcome {
    let depth = params.n_prev_blocks.max(params.neighbor_history_blocks);
    validate_with_history(candidate, chain.recent(depth), reputations, ledger, params)
}

/// Same as [`validate_block`] with the recent blocks given explicitly,
/// oldest first.
pub fn validate_with_history(
    candidate: &[Transaction],
    recent: &[Block],
    reputations: &ReputationTable,
    ledger: &ConflictLedger,
    params: &ValidationParams,
) -> ValidationOutcome {
    let tail = |n: usize| &recent[recent.len().saturating_sub(n)..];
    let history = History::from_blocks(tail(params.n_prev_blocks));
    let neighbors = NeighborHistory::from_blocks(tail(params.neighbor_history_blocks));

    // newcomers join with the initial reputation
    let mut working = reputations.clone();
    for tx in candidate {
        for node in [tx.sender, tx.detected] {
            if !working.contains(&node) {
                working.set(node, params.initial_reputation);
            }
        }
    }

    let mut verdicts: Vec<Option<TxVerdict>> = candidate
        .iter()
        .map(|tx| ledger.is_blacklisted(&tx.sender).then_some(TxVerdict::Blacklisted))
        .collect();

    let filtered = filter_illegal(candidate);
    for (idx, reason) in &filtered.rejected {
        if verdicts[*idx].is_none() {
            verdicts[*idx] = Some(match reason {
                IllegalReason::SelfDetection => TxVerdict::SelfDetection,
                IllegalReason::Unacknowledged => TxVerdict::Unacknowledged,
            });
        }
    }

    for &idx in &filtered.kept {
        if verdicts[idx].is_some() {
            continue;
        }
        verdicts[idx] = Some(match score_transaction(&candidate[idx], &history, &working, params) {
            TxScore::Accept { .. } => TxVerdict::Accepted,
            TxScore::NoEvidence => TxVerdict::NoEvidence,
            TxScore::Reject { .. } => TxVerdict::Implausible,
        });
    }
    let mut verdicts: Vec<TxVerdict> = verdicts.into_iter().map(|v| v.expect("all judged")).collect();

    let accepted: Vec<&Transaction> = candidate
        .iter()
        .zip(&verdicts)
        .filter(|(_, v)| v.tag() == ValidityTag::Valid)
        .map(|(tx, _)| tx)
        .collect();
    let report = detect_conflicts(&accepted, &working, ledger, params);

    let newly: BTreeSet<NodeId> = report.newly_blacklisted.iter().copied().collect();
    for (tx, verdict) in candidate.iter().zip(verdicts.iter_mut()) {
        if newly.contains(&tx.sender) {
            *verdict = TxVerdict::Blacklisted;
        }
    }
    let validity_tags: Vec<ValidityTag> = verdicts.iter().map(|v| v.tag()).collect();

    let update = update_reputations(
        candidate,
        &validity_tags,
        &report.penalties,
        &neighbors,
        &working,
        params,
    );

    ValidationOutcome {
        verdicts,
        validity_tags,
        reputation_table: update.reputations,
        activity_flags: update.activity,
        ledger: report.ledger,
        penalties: report.penalties,
    }
}

#[cfg(test)]
mod tests;
