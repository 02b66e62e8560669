//! Participant identities and the simulated key directory.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crypto::{sha256_concat, KeyPair};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Vehicle,
    Rsu,
}

impl NodeKind {
    pub(crate) fn code(self) -> u8 {
        match self {
            NodeKind::Vehicle => 0,
            NodeKind::Rsu => 1,
        }
    }
}

/// Ledger identifier of a participant.
///
/// The 32 id bytes are the participant's Ed25519 verification key. Ordering
/// is bytewise on `id`; ids are unique within a scenario so `kind` never
/// takes part in a comparison.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId {
    #[serde(with = "hex::serde")]
    pub id: [u8; 32],
    pub kind: NodeKind,
}

impl NodeId {
    pub fn new(id: [u8; 32], kind: NodeKind) -> Self {
        NodeId { id, kind }
    }

    pub fn is_rsu(&self) -> bool {
        self.kind == NodeKind::Rsu
    }

    /// First eight hex digits, handy for logs and CSV columns.
    pub fn short(&self) -> String {
        hex::encode(&self.id[..4])
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.kind {
            NodeKind::Vehicle => "veh",
            NodeKind::Rsu => "rsu",
        };
        write!(f, "{tag}:{}", self.short())
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Key pairs for every simulated identity, derived from the scenario seed.
#[derive(Clone, Debug, Default)]
pub struct KeyStore {
    keys: BTreeMap<NodeId, KeyPair>,
}

impl KeyStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Derives the key for identity number `index` of the given namespace.
    pub fn derive(seed: u64, namespace: &str, index: u64) -> KeyPair {
        let digest = sha256_concat(&[
            b"roadchain/key",
            &seed.to_be_bytes(),
            namespace.as_bytes(),
            &index.to_be_bytes(),
        ]);
        KeyPair::from_seed(digest.0)
    }

    /// Creates and registers a fresh identity.
    pub fn create(&mut self, seed: u64, namespace: &str, index: u64, kind: NodeKind) -> NodeId {
        let pair = Self::derive(seed, namespace, index);
        let id = NodeId::new(pair.public(), kind);
        self.keys.insert(id, pair);
        id
    }

    pub fn insert(&mut self, id: NodeId, pair: KeyPair) {
        self.keys.insert(id, pair);
    }

    pub fn get(&self, id: &NodeId) -> Option<&KeyPair> {
        self.keys.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &NodeId> {
        self.keys.keys()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}
