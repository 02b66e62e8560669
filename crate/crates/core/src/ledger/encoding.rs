//! Canonical binary encoding used for hashing and signing.
//!
//! All integers are big-endian, floats are IEEE-754 binary64 bit patterns
//! (big-endian), lists are prefixed with a `u32` element count and byte
//! strings with a `u32` length. Field order is fixed:
//!
//! ```text
//! node        := id[32] kind:u8                     (0 = vehicle, 1 = rsu)
//! tx_message  := 0x01 node(sender) node(detected) x:f64 y:f64 timestamp_ms:u64
//! tx          := tx_message len:u32 signature[len]
//! block_body  := 0x02 height:u64 prev_hash[32] attempt:u64 timestamp_ms:u64 node(harvester)
//! block_lists := n:u32 tx*n
//!                n:u32 tag:u8*n                    (0 = valid, 1 = rejected, 2 = blacklisted)
//!                n:u32 (node score:u64)*n          (sorted by id)
//!                n:u32 (node flag:u8)*n            (sorted by id)
//! block       := block_body len:u32 harvester_signature[len] block_lists
//! signing     := block_body block_lists
//! vote        := 0x03 block_hash[32] decision:u8   (0 = approve, 1 = reject)
//! ```
//!
//! The block hash is SHA-256 over `block`; approvals are not encoded so votes
//! never change a block's identity.

use crate::crypto::{Hash32, Signature};
use crate::geometry::Position;
use crate::identity::NodeId;

use super::{Block, Millis, Transaction};

const TX_TAG: u8 = 0x01;
const BLOCK_TAG: u8 = 0x02;
const VOTE_TAG: u8 = 0x03;

fn put_node(out: &mut Vec<u8>, node: &NodeId) {
    out.extend_from_slice(&node.id);
    out.push(node.kind.code());
}

fn put_len(out: &mut Vec<u8>, len: usize) {
    out.extend_from_slice(&(len as u32).to_be_bytes());
}

fn put_signature(out: &mut Vec<u8>, sig: &Signature) {
    put_len(out, sig.0.len());
    out.extend_from_slice(&sig.0);
}

pub fn transaction_message(
    sender: &NodeId,
    detected: &NodeId,
    position: &Position,
    timestamp: Millis,
) -> Vec<u8> {
    let mut out = Vec::with_capacity(1 + 33 + 33 + 8 + 8 + 8);
    out.push(TX_TAG);
    put_node(&mut out, sender);
    put_node(&mut out, detected);
    out.extend_from_slice(&position.x.to_bits().to_be_bytes());
    out.extend_from_slice(&position.y.to_bits().to_be_bytes());
    out.extend_from_slice(&timestamp.to_be_bytes());
    out
}

pub fn encode_transaction(out: &mut Vec<u8>, tx: &Transaction) {
    out.extend_from_slice(&tx.signing_bytes());
    put_signature(out, &tx.signature);
}

fn put_block_body(out: &mut Vec<u8>, block: &Block) {
    out.push(BLOCK_TAG);
    out.extend_from_slice(&block.height.to_be_bytes());
    out.extend_from_slice(&block.prev_hash.0);
    out.extend_from_slice(&block.attempt.to_be_bytes());
    out.extend_from_slice(&block.timestamp.to_be_bytes());
    put_node(out, &block.harvester);
}

fn put_block_lists(out: &mut Vec<u8>, block: &Block) {
    put_len(out, block.transactions.len());
    for tx in &block.transactions {
        encode_transaction(out, tx);
    }
    put_len(out, block.validity_tags.len());
    out.extend(block.validity_tags.iter().map(|t| t.code()));
    put_len(out, block.reputation_table.len());
    for (node, score) in block.reputation_table.iter() {
        put_node(out, node);
        out.extend_from_slice(&score.to_be_bytes());
    }
    put_len(out, block.activity_flags.len());
    for (node, flag) in block.activity_flags.iter() {
        put_node(out, node);
        out.push(u8::from(*flag));
    }
}

/// Hash preimage of a block.
pub fn encode_block(block: &Block) -> Vec<u8> {
    let mut out = Vec::with_capacity(256 + block.transactions.len() * 160);
    put_block_body(&mut out, block);
    put_signature(&mut out, &block.harvester_signature);
    put_block_lists(&mut out, block);
    out
}

/// Bytes covered by the harvester signature.
pub fn block_signing_bytes(block: &Block) -> Vec<u8> {
    let mut out = Vec::with_capacity(256 + block.transactions.len() * 160);
    put_block_body(&mut out, block);
    put_block_lists(&mut out, block);
    out
}

pub fn vote_message(block_hash: &Hash32, approve: bool) -> Vec<u8> {
    let mut out = Vec::with_capacity(34);
    out.push(VOTE_TAG);
    out.extend_from_slice(&block_hash.0);
    out.push(if approve { 0 } else { 1 });
    out
}
