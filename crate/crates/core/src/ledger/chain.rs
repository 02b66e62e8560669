use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::crypto;
use crate::error::{Error, Result};

use super::{encoding, Block};

/// Append-only list of blocks rooted at a genesis block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blockchain {
    blocks: Vec<Block>,
}

impl Blockchain {
    pub fn new(genesis: Block) -> Result<Self> {
        if genesis.height != 0 {
            return Err(Error::ChainLink {
                height: genesis.height,
                detail: "genesis must have height 0".into(),
            });
        }
        genesis.check_shape()?;
        Ok(Blockchain {
            blocks: vec![genesis],
        })
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain always holds genesis")
    }

    pub fn height(&self) -> u64 {
        self.tip().height
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn get(&self, height: u64) -> Option<&Block> {
        self.blocks.get(height as usize)
    }

    pub fn genesis(&self) -> &Block {
        &self.blocks[0]
    }

    /// The last `n` blocks, oldest first.
    pub fn recent(&self, n: usize) -> &[Block] {
        let start = self.blocks.len().saturating_sub(n);
        &self.blocks[start..]
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Re-checks hash links, harvester signatures and approval counts for
    /// every block past genesis.
    pub fn verify_integrity(&self, quorum: usize) -> Result<()> {
        for pair in self.blocks.windows(2) {
            let (prev, block) = (&pair[0], &pair[1]);
            check_link(prev, block)?;
            check_signatures(block, quorum)?;
        }
        Ok(())
    }
}

fn check_link(prev: &Block, block: &Block) -> Result<()> {
    if block.height != prev.height + 1 {
        return Err(Error::ChainLink {
            height: block.height,
            detail: format!("expected height {}", prev.height + 1),
        });
    }
    let expected = prev.hash();
    if block.prev_hash != expected {
        return Err(Error::ChainLink {
            height: block.height,
            detail: format!("prev_hash {} does not match {}", block.prev_hash, expected),
        });
    }
    Ok(())
}

fn check_signatures(block: &Block, quorum: usize) -> Result<()> {
    block.check_shape()?;
    if !block.verify_harvester_signature() {
        return Err(Error::Signature(format!(
            "harvester signature of block {}",
            block.height
        )));
    }
    let valid = count_valid_approvals(block);
    if valid < quorum {
        return Err(Error::Quorum {
            valid,
            required: quorum,
        });
    }
    Ok(())
}

/// Distinct voters whose approval signature verifies over the block hash.
pub(crate) fn count_valid_approvals(block: &Block) -> usize {
    let message = encoding::vote_message(&block.hash(), true);
    let mut voters = BTreeSet::new();
    for approval in &block.approvals {
        if crypto::verify(&approval.voter.id, &message, &approval.signature) {
            voters.insert(approval.voter);
        }
    }
    voters.len()
}

/// Appends `block` if it links to the tip, carries a valid harvester
/// signature and at least `quorum` valid approvals. The chain is left
/// untouched on error.
pub fn append_block(chain: &mut Blockchain, block: Block, quorum: usize) -> Result<()> {
    check_link(chain.tip(), &block)?;
    check_signatures(&block, quorum)?;
    chain.blocks.push(block);
    Ok(())
}
