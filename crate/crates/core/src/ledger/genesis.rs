use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::crypto::{Hash32, KeyPair, Signature};
use crate::error::{Error, Result};
use crate::geometry::Position;
use crate::identity::{KeyStore, NodeId};

use super::{ActivityFlags, Block, ReputationTable, Transaction, ValidityTag};

/// Inputs for bootstrapping a chain from trusted road-side units.
#[derive(Clone, Debug)]
pub struct GenesisSpec<'a> {
    pub rsus: &'a [(NodeId, Position)],
    pub keys: &'a KeyStore,
    /// Scenario-level key that signs genesis and is never used again.
    pub bootstrap: &'a KeyPair,
    pub reputation: u64,
    pub seed: u64,
}

/// Builds the height-0 block: every RSU is paired with a randomly chosen
/// other RSU and the pair exchanges reciprocal transactions at their fixed
/// positions. All transactions are valid and every RSU starts active with
/// `spec.reputation`.
pub fn make_genesis(spec: &GenesisSpec<'_>) -> Result<Block> {
    let rsus = spec.rsus;
    if rsus.len() < 2 {
        return Err(Error::config(format!(
            "genesis needs at least 2 trusted RSUs, got {}",
            rsus.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pairs = BTreeSet::new();
    for i in 0..rsus.len() {
        let mut j = rng.random_range(0..rsus.len() - 1);
        if j >= i {
            j += 1;
        }
        pairs.insert((i.min(j), i.max(j)));
    }

    let mut transactions = Vec::with_capacity(pairs.len() * 2);
    for (i, j) in pairs {
        for (from, to) in [(i, j), (j, i)] {
            let (sender, position) = rsus[from];
            let key = spec.keys.get(&sender).ok_or(Error::Lookup(sender))?;
            transactions.push(Transaction::signed(sender, rsus[to].0, position, 0, key));
        }
    }

    let reputation_table: ReputationTable =
        rsus.iter().map(|(id, _)| (*id, spec.reputation)).collect();
    let activity_flags: ActivityFlags = rsus.iter().map(|(id, _)| (*id, true)).collect();
    let harvester = NodeId::new(spec.bootstrap.public(), crate::identity::NodeKind::Rsu);

    let mut block = Block {
        height: 0,
        prev_hash: Hash32::ZERO,
        attempt: 0,
        timestamp: 0,
        harvester,
        harvester_signature: Signature::ZERO,
        validity_tags: vec![ValidityTag::Valid; transactions.len()],
        transactions,
        reputation_table,
        activity_flags,
        approvals: Vec::new(),
    };
    block.sign_as_harvester(spec.bootstrap);
    Ok(block)
}
