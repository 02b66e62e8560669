use std::collections::{BTreeMap, HashSet};

use rand::Rng;

use crate::identity::NodeId;

use super::{Millis, Transaction};

#[derive(Clone, Debug, PartialEq)]
pub struct MempoolEntry {
    pub tx: Transaction,
    pub received_at: Millis,
}

type EntryKey = (NodeId, NodeId, Millis, [u8; 64]);

fn key_of(tx: &Transaction) -> EntryKey {
    (tx.sender, tx.detected, tx.timestamp, tx.signature.0)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Admission {
    Appended,
    /// Inserted after evicting this older transaction.
    Replaced(Box<Transaction>),
    /// The pool was full and the dominant sender had nothing older.
    Dropped,
    Duplicate,
}

/// Staging area for broadcast transactions awaiting harvesting, bounded by
/// the block size.
#[derive(Clone, Debug)]
pub struct Mempool {
    capacity: usize,
    entries: Vec<MempoolEntry>,
    seen: HashSet<EntryKey>,
    per_sender: BTreeMap<NodeId, usize>,
}

impl Mempool {
    pub fn new(capacity: usize) -> Self {
        Mempool {
            capacity,
            entries: Vec::new(),
            seen: HashSet::new(),
            per_sender: BTreeMap::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MempoolEntry] {
        &self.entries
    }

    pub fn transactions(&self) -> impl Iterator<Item = &Transaction> {
        self.entries.iter().map(|e| &e.tx)
    }

    pub fn count_from(&self, sender: &NodeId) -> usize {
        self.per_sender.get(sender).copied().unwrap_or(0)
    }

    /// Sender holding the most entries; ties go to the lowest id.
    pub fn dominant_sender(&self) -> Option<NodeId> {
        let mut best: Option<(NodeId, usize)> = None;
        for (sender, &count) in &self.per_sender {
            if best.is_none_or(|(_, c)| count > c) {
                best = Some((*sender, count));
            }
        }
        best.map(|(s, _)| s)
    }

    pub fn clear(&mut self) {
        self.entries.clear();
        self.seen.clear();
        self.per_sender.clear();
    }

    /// Drains all entries, leaving the pool empty.
    pub fn take(&mut self) -> Vec<MempoolEntry> {
        self.seen.clear();
        self.per_sender.clear();
        std::mem::take(&mut self.entries)
    }

    /// Greedy admission: below capacity the entry is appended. When full, the
    /// sender with the most pooled transactions is located and its entries
    /// are probed in random order until one strictly older than `incoming` is
    /// found; that one is replaced. If none is older, `incoming` is dropped.
    pub fn admit<R: Rng + ?Sized>(&mut self, incoming: MempoolEntry, rng: &mut R) -> Admission {
        let key = key_of(&incoming.tx);
        if self.seen.contains(&key) {
            return Admission::Duplicate;
        }
        if self.entries.len() < self.capacity {
            self.push(incoming);
            return Admission::Appended;
        }
        let Some(dominant) = self.dominant_sender() else {
            return Admission::Dropped;
        };
        let mut candidates: Vec<usize> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.tx.sender == dominant)
            .map(|(i, _)| i)
            .collect();
        // random probing without replacement
        let mut remaining = candidates.len();
        while remaining > 0 {
            let pick = rng.random_range(0..remaining);
            let idx = candidates[pick];
            if self.entries[idx].tx.timestamp < incoming.tx.timestamp {
                let evicted = self.remove_at(idx);
                self.push(incoming);
                return Admission::Replaced(Box::new(evicted.tx));
            }
            candidates.swap(pick, remaining - 1);
            remaining -= 1;
        }
        Admission::Dropped
    }

    fn push(&mut self, entry: MempoolEntry) {
        self.seen.insert(key_of(&entry.tx));
        *self.per_sender.entry(entry.tx.sender).or_default() += 1;
        self.entries.push(entry);
    }

    fn remove_at(&mut self, idx: usize) -> MempoolEntry {
        // keep arrival order for the remaining entries
        let entry = self.entries.remove(idx);
        self.seen.remove(&key_of(&entry.tx));
        if let Some(count) = self.per_sender.get_mut(&entry.tx.sender) {
            *count -= 1;
            if *count == 0 {
                self.per_sender.remove(&entry.tx.sender);
            }
        }
        entry
    }
}

/// Functional form of [`Mempool::admit`] over a plain entry list.
pub fn greedy_select<R: Rng + ?Sized>(
    mempool: &[MempoolEntry],
    incoming: MempoolEntry,
    blocksize: usize,
    rng: &mut R,
) -> Vec<MempoolEntry> {
    let mut pool = Mempool::new(blocksize.max(mempool.len()));
    for entry in mempool {
        pool.push(entry.clone());
    }
    pool.capacity = blocksize;
    pool.admit(incoming, rng);
    pool.entries
}
