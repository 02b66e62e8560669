//! View numbers, the reputation lottery and the approval vote.
//!
//! A round is identified by a view number derived from the previous block
//! hash and the attempt number. Winning tickets are `SHA-256(view || k)` for
//! `k = 0, 1, ...`, each mapped into `[0, total_reputation)` and resolved to
//! the participant owning that slice of the cumulative reputation line.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::crypto::{sha256_concat, Hash32, Signature};
use crate::error::{Error, Result};
use crate::identity::{KeyStore, NodeId};
use crate::ledger::{compute_attempt_number, encoding, ActivityFlags, Approval, Block};
use crate::ledger::{ReputationTable, ValidityTag};

/// Upper bound on lottery draws before giving up on seating a committee.
const MAX_DRAWS: u64 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ViewNumber(pub Hash32);

/// View number for an explicit attempt number.
pub fn view_for_attempt(prev_hash: &Hash32, attempt: u64) -> ViewNumber {
    ViewNumber(sha256_concat(&[&prev_hash.0, &attempt.to_be_bytes()]))
}

pub fn derive_view_number(
    prev_hash: &Hash32,
    elapsed: Duration,
    block_time: Duration,
) -> Result<ViewNumber> {
    let attempt = compute_attempt_number(elapsed, block_time)?;
    Ok(view_for_attempt(prev_hash, attempt))
}

/// Maps a 256-bit big-endian value `h` to `floor(h * range / 2^256)`.
pub fn scale_hash(hash: &Hash32, range: u64) -> u64 {
    let mut carry: u128 = 0;
    for limb in hash.0.chunks_exact(8).rev() {
        let limb = u64::from_be_bytes(limb.try_into().unwrap());
        let prod = limb as u128 * range as u128 + carry;
        carry = prod >> 64;
    }
    carry as u64
}

/// Winning ticket number `k` of a view, in `[0, total)`.
pub fn ticket(view: &ViewNumber, k: u64, total: u64) -> u64 {
    let digest = sha256_concat(&[&view.0 .0, &k.to_be_bytes()]);
    scale_hash(&digest, total)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Committee {
    pub harvester: NodeId,
    pub supporters: Vec<NodeId>,
    pub f: usize,
}

impl Committee {
    pub fn size(&self) -> usize {
        self.supporters.len() + 1
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.harvester == *node || self.supporters.contains(node)
    }
}

/// Participants with positive reputation laid out on the cumulative
/// reputation line in id order.
#[derive(Clone, Debug)]
pub struct Electorate {
    members: Vec<NodeId>,
    /// Exclusive upper end of each member's interval.
    upper: Vec<u64>,
}

impl Electorate {
    pub fn new(reputations: &ReputationTable) -> Self {
        let mut members = Vec::new();
        let mut upper = Vec::new();
        let mut acc = 0u64;
        // table iteration is already sorted by id bytes
        for (node, &score) in reputations.iter() {
            if score > 0 {
                acc += score;
                members.push(*node);
                upper.push(acc);
            }
        }
        Electorate { members, upper }
    }

    pub fn total(&self) -> u64 {
        self.upper.last().copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn owner(&self, ticket: u64) -> usize {
        self.upper.partition_point(|&end| end <= ticket)
    }

    /// Draws `3f + 2` distinct winners; the first is the harvester.
    pub fn elect(&self, view: &ViewNumber, f: usize) -> Result<Committee> {
        let required = 3 * f + 2;
        if self.members.len() < required {
            return Err(Error::Election {
                eligible: self.members.len(),
                required,
            });
        }
        let total = self.total();
        let mut taken = vec![false; self.members.len()];
        let mut winners = Vec::with_capacity(required);
        let mut k = 0u64;
        while winners.len() < required {
            if k >= MAX_DRAWS {
                return Err(Error::Election {
                    eligible: self.members.len(),
                    required,
                });
            }
            let idx = self.owner(ticket(view, k, total));
            k += 1;
            if !taken[idx] {
                taken[idx] = true;
                winners.push(self.members[idx]);
            }
        }
        let harvester = winners.remove(0);
        Ok(Committee {
            harvester,
            supporters: winners,
            f,
        })
    }
}

pub fn elect_committee(view: &ViewNumber, reputations: &ReputationTable, f: usize) -> Result<Committee> {
    Electorate::new(reputations).elect(view, f)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuorumPolicy {
    /// Classical PBFT: `2f + 1` approvals.
    #[default]
    TwoFPlusOne,
    /// `f` approvals.
    PaperF,
}

pub fn quorum_for(f: usize, policy: QuorumPolicy) -> usize {
    match policy {
        QuorumPolicy::TwoFPlusOne => 2 * f + 1,
        QuorumPolicy::PaperF => f,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Approve,
    Reject,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub voter: NodeId,
    pub block_hash: Hash32,
    pub decision: Decision,
    pub signature: Signature,
}

impl VoteRecord {
    pub fn verify(&self) -> bool {
        let message = encoding::vote_message(&self.block_hash, self.decision == Decision::Approve);
        crate::crypto::verify(&self.voter.id, &message, &self.signature)
    }
}

/// The part of a block every supporter recomputes before voting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockVerdict {
    pub validity_tags: Vec<ValidityTag>,
    pub reputation_table: ReputationTable,
    pub activity_flags: ActivityFlags,
}

impl BlockVerdict {
    pub fn matches(&self, block: &Block) -> bool {
        self.validity_tags == block.validity_tags
            && self.reputation_table == block.reputation_table
            && self.activity_flags == block.activity_flags
    }
}

// short-lived, boxing the block buys nothing
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug, PartialEq)]
pub enum VoteOutcome {
    Accepted { block: Block, votes: Vec<VoteRecord> },
    Rejected { votes: Vec<VoteRecord>, reason: RejectReason },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RejectReason {
    BadHarvester,
    InsufficientApprovals { approvals: usize, quorum: usize },
}

impl VoteOutcome {
    pub fn approvals(&self) -> usize {
        let votes = match self {
            VoteOutcome::Accepted { votes, .. } | VoteOutcome::Rejected { votes, .. } => votes,
        };
        votes.iter().filter(|v| v.decision == Decision::Approve).count()
    }

    pub fn is_accepted(&self) -> bool {
        matches!(self, VoteOutcome::Accepted { .. })
    }
}

/// Every supporter recomputes the validation outcome through `recompute`
/// and approves iff it matches the candidate exactly. The block is accepted
/// with the approval signatures attached once `quorum` approvals exist.
pub fn run_vote_round<F>(
    candidate: Block,
    committee: &Committee,
    keys: &KeyStore,
    mut recompute: F,
    quorum: usize,
) -> VoteOutcome
where
    F: FnMut(&NodeId, &Block) -> BlockVerdict,
{
    if candidate.harvester != committee.harvester || !candidate.verify_harvester_signature() {
        return VoteOutcome::Rejected {
            votes: Vec::new(),
            reason: RejectReason::BadHarvester,
        };
    }
    let block_hash = candidate.hash();
    let mut votes = Vec::with_capacity(committee.supporters.len());
    for supporter in &committee.supporters {
        let Some(key) = keys.get(supporter) else {
            continue;
        };
        let approve = recompute(supporter, &candidate).matches(&candidate);
        let signature = key.sign(&encoding::vote_message(&block_hash, approve));
        votes.push(VoteRecord {
            voter: *supporter,
            block_hash,
            decision: if approve { Decision::Approve } else { Decision::Reject },
            signature,
        });
    }
    let approvals = votes.iter().filter(|v| v.decision == Decision::Approve).count();
    if approvals < quorum {
        return VoteOutcome::Rejected {
            votes,
            reason: RejectReason::InsufficientApprovals { approvals, quorum },
        };
    }
    let mut block = candidate;
    block.approvals = votes
        .iter()
        .filter(|v| v.decision == Decision::Approve)
        .map(|v| Approval {
            voter: v.voter,
            signature: v.signature,
        })
        .collect();
    VoteOutcome::Accepted { block, votes }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_hash_extremes() {
        assert_eq!(scale_hash(&Hash32([0; 32]), 1000), 0);
        assert_eq!(scale_hash(&Hash32([0xff; 32]), 1000), 999);
        let mut half = [0u8; 32];
        half[0] = 0x80;
        assert_eq!(scale_hash(&Hash32(half), 1000), 500);
        assert_eq!(scale_hash(&Hash32(half), u64::MAX), u64::MAX / 2);
    }

    #[test]
    fn quorum_policies() {
        assert_eq!(quorum_for(6, QuorumPolicy::TwoFPlusOne), 13);
        assert_eq!(quorum_for(6, QuorumPolicy::PaperF), 6);
        assert_eq!(quorum_for(1, QuorumPolicy::TwoFPlusOne), 3);
    }

    #[test]
    fn view_number_buckets_by_attempt() {
        let prev = Hash32([3; 32]);
        let bt = Duration::from_secs(60);
        let at = |s| derive_view_number(&prev, Duration::from_secs(s), bt).unwrap();
        assert_eq!(at(10), at(10));
        assert_ne!(at(59), at(61));
        assert_eq!(at(61), at(119));
    }
}
