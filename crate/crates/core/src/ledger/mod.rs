//! Transactions, blocks, the hash-chained ledger and the mempool.

mod chain;
pub mod encoding;
mod genesis;
mod mempool;

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::crypto::{self, Hash32, KeyPair, Signature};
use crate::error::{Error, Result};
use crate::geometry::Position;
use crate::identity::NodeId;

pub use chain::{append_block, Blockchain};
pub use genesis::{make_genesis, GenesisSpec};
pub use mempool::{greedy_select, Admission, Mempool, MempoolEntry};

/// Timestamps are integer milliseconds of simulated time.
pub type Millis = u64;

pub(crate) mod map_entries {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S, K, V>(map: &BTreeMap<K, V>, s: S) -> Result<S::Ok, S::Error>
    where
        S: Serializer,
        K: Serialize,
        V: Serialize,
    {
        s.collect_seq(map.iter())
    }

    pub fn deserialize<'de, D, K, V>(d: D) -> Result<BTreeMap<K, V>, D::Error>
    where
        D: Deserializer<'de>,
        K: Deserialize<'de> + Ord,
        V: Deserialize<'de>,
    {
        let entries: Vec<(K, V)> = Deserialize::deserialize(d)?;
        Ok(entries.into_iter().collect())
    }
}

/// One signed detection event: `sender` saw `detected` while at `position`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub sender: NodeId,
    pub detected: NodeId,
    pub position: Position,
    pub timestamp: Millis,
    pub signature: Signature,
}

impl Transaction {
    pub fn signed(
        sender: NodeId,
        detected: NodeId,
        position: Position,
        timestamp: Millis,
        key: &KeyPair,
    ) -> Self {
        let message = encoding::transaction_message(&sender, &detected, &position, timestamp);
        Transaction {
            sender,
            detected,
            position,
            timestamp,
            signature: key.sign(&message),
        }
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        encoding::transaction_message(&self.sender, &self.detected, &self.position, self.timestamp)
    }

    /// Checks the signature against the sender's verification key.
    pub fn verify(&self) -> bool {
        crypto::verify(&self.sender.id, &self.signing_bytes(), &self.signature)
    }

    pub fn is_self_detection(&self) -> bool {
        self.sender == self.detected
    }

    pub fn involves(&self, node: &NodeId) -> bool {
        self.sender == *node || self.detected == *node
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidityTag {
    Valid,
    Rejected,
    Blacklisted,
}

impl ValidityTag {
    pub(crate) fn code(self) -> u8 {
        match self {
            ValidityTag::Valid => 0,
            ValidityTag::Rejected => 1,
            ValidityTag::Blacklisted => 2,
        }
    }
}

/// Integer reputation per participant.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReputationTable {
    #[serde(with = "map_entries")]
    scores: BTreeMap<NodeId, u64>,
}

impl ReputationTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reputation of `node`; participants never seen have none.
    pub fn get(&self, node: &NodeId) -> u64 {
        self.scores.get(node).copied().unwrap_or(0)
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.scores.contains_key(node)
    }

    pub fn set(&mut self, node: NodeId, score: u64) {
        self.scores.insert(node, score);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &u64)> {
        self.scores.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &NodeId> {
        self.scores.keys()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.scores.values().sum()
    }

    pub fn max_score(&self) -> u64 {
        self.scores.values().copied().max().unwrap_or(0)
    }
}

impl FromIterator<(NodeId, u64)> for ReputationTable {
    fn from_iter<I: IntoIterator<Item = (NodeId, u64)>>(iter: I) -> Self {
        ReputationTable {
            scores: iter.into_iter().collect(),
        }
    }
}

/// Per-participant activity flag for one block.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActivityFlags {
    #[serde(with = "map_entries")]
    flags: BTreeMap<NodeId, bool>,
}

impl ActivityFlags {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, node: &NodeId) -> bool {
        self.flags.get(node).copied().unwrap_or(false)
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.flags.contains_key(node)
    }

    pub fn set(&mut self, node: NodeId, active: bool) {
        self.flags.insert(node, active);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &bool)> {
        self.flags.iter()
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }
}

impl FromIterator<(NodeId, bool)> for ActivityFlags {
    fn from_iter<I: IntoIterator<Item = (NodeId, bool)>>(iter: I) -> Self {
        ActivityFlags {
            flags: iter.into_iter().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Approval {
    pub voter: NodeId,
    pub signature: Signature,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Hash32,
    pub attempt: u64,
    pub timestamp: Millis,
    pub harvester: NodeId,
    pub harvester_signature: Signature,
    pub transactions: Vec<Transaction>,
    pub validity_tags: Vec<ValidityTag>,
    pub reputation_table: ReputationTable,
    pub activity_flags: ActivityFlags,
    pub approvals: Vec<Approval>,
}

impl Block {
    /// Hash of the canonical encoding, approvals excluded.
    pub fn hash(&self) -> Hash32 {
        hash_block(self)
    }

    /// Signs the block content as `key`'s owner.
    pub fn sign_as_harvester(&mut self, key: &KeyPair) {
        self.harvester_signature = key.sign(&encoding::block_signing_bytes(self));
    }

    pub fn verify_harvester_signature(&self) -> bool {
        crypto::verify(
            &self.harvester.id,
            &encoding::block_signing_bytes(self),
            &self.harvester_signature,
        )
    }

    /// Transactions paired with their tags.
    pub fn tagged(&self) -> impl Iterator<Item = (&Transaction, ValidityTag)> {
        self.transactions.iter().zip(self.validity_tags.iter().copied())
    }

    pub fn valid_transactions(&self) -> impl Iterator<Item = &Transaction> {
        self.tagged()
            .filter(|(_, tag)| *tag == ValidityTag::Valid)
            .map(|(tx, _)| tx)
    }

    pub(crate) fn check_shape(&self) -> Result<()> {
        if self.transactions.len() != self.validity_tags.len() {
            return Err(Error::Malformed(format!(
                "{} transactions but {} validity tags",
                self.transactions.len(),
                self.validity_tags.len()
            )));
        }
        for tx in &self.transactions {
            for node in [&tx.sender, &tx.detected] {
                if !self.reputation_table.contains(node) || !self.activity_flags.contains(node) {
                    return Err(Error::Malformed(format!(
                        "participant {node} missing from reputation table or activity flags"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn hash_block(block: &Block) -> Hash32 {
    crypto::sha256(&encoding::encode_block(block))
}

/// `floor(elapsed / block_time)`.
pub fn compute_attempt_number(elapsed: Duration, block_time: Duration) -> Result<u64> {
    if block_time.is_zero() {
        return Err(Error::config("block time must be positive"));
    }
    Ok((elapsed.as_nanos() / block_time.as_nanos()) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attempt_number_floors() {
        let bt = Duration::from_secs(60);
        assert_eq!(compute_attempt_number(Duration::from_secs(59), bt).unwrap(), 0);
        assert_eq!(compute_attempt_number(Duration::from_secs(60), bt).unwrap(), 1);
        assert_eq!(compute_attempt_number(Duration::from_secs(130), bt).unwrap(), 2);
    }

    #[test]
    fn attempt_number_rejects_zero_block_time() {
        assert!(matches!(
            compute_attempt_number(Duration::from_secs(5), Duration::ZERO),
            Err(Error::Config(_))
        ));
    }
}
