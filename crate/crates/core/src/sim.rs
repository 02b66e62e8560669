//! The scenario loop: world step, probe cycles and attack injection,
//! mempool admission, and one consensus round per block time.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{inject_offset_position, inject_random_spam, inject_replay, AttackKind, GroupAttack};
use crate::config::ScenarioConfig;
use crate::consensus::{quorum_for, run_vote_round, view_for_attempt, Electorate, VoteOutcome};
use crate::crypto::KeyPair;
use crate::error::{Error, Result};
use crate::identity::{KeyStore, NodeId, NodeKind};
use crate::ledger::{
    append_block, compute_attempt_number, make_genesis, Block, Blockchain, GenesisSpec, Mempool, MempoolEntry,
    Millis, Transaction, ValidityTag,
};
use crate::validation::{validate_block, ConflictLedger, ValidationOutcome};
use crate::world::{probe_cycle, MobilityModel, WorldState};

/// Consecutive rounds without a seatable committee before a run aborts.
pub const MAX_ELECTION_FAILURES: u64 = 10;

/// One row per appended block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub time_s: u64,
    pub height: u64,
    pub attempt: u64,
    pub avg_rep_legit: f64,
    pub avg_rep_malicious: f64,
    pub accepted_tx: usize,
    pub rejected_tx: usize,
    pub blacklisted_tx: usize,
    pub active_legit: usize,
    pub active_malicious: usize,
    pub malicious_accept_share: f64,
    pub legit_tx: usize,
    pub legit_accepted_tx: usize,
    pub malicious_tx: usize,
    pub malicious_accepted_tx: usize,
}

/// One row per consensus round, successful or not.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsensusRow {
    pub time_s: u64,
    pub height: u64,
    pub attempt: u64,
    pub harvester: String,
    pub approvals: usize,
    pub outcome: String,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub chain: Blockchain,
    pub metrics: Vec<MetricsRow>,
    pub consensus: Vec<ConsensusRow>,
    pub attackers: BTreeSet<NodeId>,
    pub ledger: ConflictLedger,
    /// Set when the run stopped early because no committee could be seated.
    pub halt: Option<Halt>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Halt {
    pub time_s: u64,
    pub height: u64,
    pub attempts: u64,
}

impl Halt {
    pub fn to_error(self) -> Error {
        Error::ElectionExhausted {
            height: self.height,
            attempts: self.attempts,
        }
    }
}

/// Per-block metrics from the tags, table and flags a block carries.
pub fn block_metrics(block: &Block, attackers: &BTreeSet<NodeId>) -> MetricsRow {
    let mut row = MetricsRow {
        time_s: block.timestamp / 1000,
        height: block.height,
        attempt: block.attempt,
        avg_rep_legit: 0.0,
        avg_rep_malicious: 0.0,
        accepted_tx: 0,
        rejected_tx: 0,
        blacklisted_tx: 0,
        active_legit: 0,
        active_malicious: 0,
        malicious_accept_share: 0.0,
        legit_tx: 0,
        legit_accepted_tx: 0,
        malicious_tx: 0,
        malicious_accepted_tx: 0,
    };
    for (tx, tag) in block.tagged() {
        match tag {
            ValidityTag::Valid => row.accepted_tx += 1,
            ValidityTag::Rejected => row.rejected_tx += 1,
            ValidityTag::Blacklisted => row.blacklisted_tx += 1,
        }
        let ok = tag == ValidityTag::Valid;
        if attackers.contains(&tx.sender) {
            row.malicious_tx += 1;
            row.malicious_accepted_tx += ok as usize;
        } else {
            row.legit_tx += 1;
            row.legit_accepted_tx += ok as usize;
        }
    }
    let (mut sum_legit, mut sum_mal) = (0u64, 0u64);
    for (node, active) in block.activity_flags.iter() {
        if !*active {
            continue;
        }
        let score = block.reputation_table.get(node);
        if attackers.contains(node) {
            row.active_malicious += 1;
            sum_mal += score;
        } else {
            row.active_legit += 1;
            sum_legit += score;
        }
    }
    if row.active_legit > 0 {
        row.avg_rep_legit = sum_legit as f64 / row.active_legit as f64;
    }
    if row.active_malicious > 0 {
        row.avg_rep_malicious = sum_mal as f64 / row.active_malicious as f64;
    }
    if row.malicious_tx > 0 {
        row.malicious_accept_share = row.malicious_accepted_tx as f64 / row.malicious_tx as f64;
    }
    row
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Spammer,
    Offset,
    Replayer { victim: NodeId },
    OnRoad,
}

/// A fully set-up scenario that can be advanced tick by tick.
pub struct Simulation {
    config: ScenarioConfig,
    keys: KeyStore,
    world: WorldState,
    mobility: MobilityModel,
    chain: Blockchain,
    ledger: ConflictLedger,
    mempool: Mempool,
    roles: BTreeMap<NodeId, Role>,
    attackers: BTreeSet<NodeId>,
    group: Option<GroupAttack>,
    attack_rng: ChaCha8Rng,
    mempool_rng: ChaCha8Rng,
    metrics: Vec<MetricsRow>,
    consensus: Vec<ConsensusRow>,
    election_failures: u64,
    last_probe: Option<Millis>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.check()?;
        let seed = config.seed;
        let v_max = config.max_speed_kmh / 3.6;
        let mut mobility = MobilityModel::new(
            config.mobility,
            config.area_m[0],
            config.area_m[1],
            config.min_speed_kmh / 3.6,
            v_max,
            seed,
        )?
        .with_grid_spacing(config.grid_spacing_m);

        let mut keys = KeyStore::new();
        let mut world = WorldState::default();
        let mut rsus = Vec::with_capacity(config.num_rsus);
        for i in 0..config.num_rsus {
            let id = keys.create(seed, "rsu", i as u64, NodeKind::Rsu);
            let pos = mobility.random_position();
            world.rsus.insert(id, pos);
            rsus.push((id, pos));
        }
        let mut vehicles = Vec::with_capacity(config.num_vehicles);
        for i in 0..config.num_vehicles {
            let id = keys.create(seed, "vehicle", i as u64, NodeKind::Vehicle);
            world.vehicles.insert(id, mobility.spawn());
            vehicles.push(id);
        }

        let bootstrap = KeyStore::derive(seed, "bootstrap", 0);
        let genesis = make_genesis(&GenesisSpec {
            rsus: &rsus,
            keys: &keys,
            bootstrap: &bootstrap,
            reputation: config.genesis_reputation,
            seed,
        })?;
        let chain = Blockchain::new(genesis)?;

        let mut attack_rng = stream(seed, 1);
        let mut roles = BTreeMap::new();
        let mut group = None;
        let attack = &config.attack;
        let chosen: Vec<NodeId> = match &attack.attacker_indices {
            Some(ix) => ix.iter().filter_map(|&i| vehicles.get(i).copied()).collect(),
            None => vehicles[..attack.attacker_count(vehicles.len())].to_vec(),
        };
        match attack.kind {
            AttackKind::None => {}
            AttackKind::RandomSpam => roles.extend(chosen.iter().map(|id| (*id, Role::Spammer))),
            AttackKind::OffsetPosition => roles.extend(chosen.iter().map(|id| (*id, Role::Offset))),
            AttackKind::Replay => {
                let honest: Vec<NodeId> = vehicles.iter().filter(|v| !chosen.contains(v)).copied().collect();
                for id in &chosen {
                    if honest.is_empty() {
                        break;
                    }
                    let victim = honest[attack_rng.random_range(0..honest.len())];
                    roles.insert(*id, Role::Replayer { victim });
                }
            }
            AttackKind::CoordinatedGroup => {
                let onroad = *vehicles.first().ok_or_else(|| Error::config("coordinated group needs a vehicle"))?;
                roles.insert(onroad, Role::OnRoad);
                group = Some(GroupAttack::new(attack, onroad, &mut keys, seed, config.range_m, &mut attack_rng)?);
            }
        }
        let mut attackers: BTreeSet<NodeId> = roles.keys().copied().collect();
        if let Some(g) = &group {
            attackers.extend(g.offroad.iter().copied());
        }

        Ok(Simulation {
            mempool: Mempool::new(config.blocksize),
            config,
            keys,
            world,
            mobility,
            chain,
            ledger: ConflictLedger::new(),
            roles,
            attackers,
            group,
            attack_rng,
            mempool_rng: stream(seed, 2),
            metrics: Vec::new(),
            consensus: Vec::new(),
            election_failures: 0,
            last_probe: None,
        })
    }

    pub fn attackers(&self) -> &BTreeSet<NodeId> {
        &self.attackers
    }

    pub fn chain(&self) -> &Blockchain {
        &self.chain
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn keys(&self) -> &KeyStore {
        &self.keys
    }

    pub fn quorum(&self) -> usize {
        quorum_for(self.config.fault_tolerance, self.config.quorum_policy)
    }

    /// Runs to `duration_s` and returns everything recorded. A run whose
    /// stake has collapsed so far that no committee can be seated stops
    /// early with [`RunOutput::halt`] set.
    pub fn run(mut self) -> Result<RunOutput> {
        let mut halt = None;
        while self.world.time < self.config.duration_s * 1000 {
            match self.tick() {
                Ok(()) => {}
                Err(Error::ElectionExhausted { height, attempts }) => {
                    halt = Some(Halt {
                        time_s: self.world.time / 1000,
                        height,
                        attempts,
                    });
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(RunOutput {
            halt,
            chain: self.chain,
            metrics: self.metrics,
            consensus: self.consensus,
            attackers: self.attackers,
            ledger: self.ledger,
        })
    }

    /// Advances one simulated second.
    pub fn tick(&mut self) -> Result<()> {
        crate::world::step_world(&mut self.world, Duration::from_secs(1), &mut self.mobility);
        let now_s = self.world.time / 1000;
        if now_s.is_multiple_of(self.config.probe_interval_s) {
            self.probe()?;
        }
        if now_s.is_multiple_of(self.config.blocktime_s) {
            self.consensus_round()?;
        }
        Ok(())
    }

    fn attack_active(&self) -> bool {
        self.config.attack.kind != AttackKind::None && self.world.time >= self.config.attack.start_s * 1000
    }

    fn attack_rounds(&self) -> u64 {
        (self.world.time / 1000).saturating_sub(self.config.attack.start_s) / self.config.blocktime_s
    }

    fn probe(&mut self) -> Result<()> {
        let now = self.world.time;
        let dt_s = self.last_probe.map_or(self.config.probe_interval_s as f64, |t| (now - t) as f64 / 1000.0);
        self.last_probe = Some(now);
        let active = self.attack_active();
        let parallel = self.config.attack.honest_in_parallel;
        let phase = self.group.as_ref().map(|g| g.phase_at(self.attack_rounds()));

        let roles = &self.roles;
        let silent = |id: &NodeId| -> bool {
            if !active {
                return false;
            }
            match roles.get(id) {
                Some(Role::Spammer) | Some(Role::Replayer { .. }) => !parallel,
                Some(Role::OnRoad) => !phase.is_some_and(GroupAttack::onroad_participates),
                Some(Role::Offset) | None => false,
            }
        };
        let detections = probe_cycle(&self.world, self.config.range_m, |id| !silent(id));

        let attack = &self.config.attack;
        let mut honest = Vec::with_capacity(detections.len());
        let mut injected = Vec::new();
        for d in &detections {
            let key = self.keys.get(&d.prober).ok_or(Error::Lookup(d.prober))?;
            let mut position = d.position;
            if active && self.roles.get(&d.prober) == Some(&Role::Offset) {
                position = inject_offset_position(
                    position,
                    attack.offset_vector(),
                    attack.per_tx_offset,
                    attack.offset_radius,
                    &mut self.attack_rng,
                );
                injected.push(Transaction::signed(d.prober, d.responder, position, d.time, key));
            } else {
                honest.push(Transaction::signed(d.prober, d.responder, position, d.time, key));
            }
        }

        if active {
            let honest_nodes = self.world.len() - self.roles.len();
            let honest_rate = if honest_nodes == 0 {
                0.0
            } else {
                honest.iter().filter(|t| !self.attackers.contains(&t.sender)).count() as f64 / honest_nodes as f64
            };
            let roster: Vec<NodeId> = self.world.nodes().map(|(id, _)| id).collect();
            for (id, role) in &self.roles {
                match role {
                    Role::Spammer => injected.extend(inject_random_spam(
                        *id,
                        &self.keys,
                        &roster,
                        (self.config.area_m[0], self.config.area_m[1]),
                        honest_rate,
                        attack.spam_multiplier,
                        now,
                        &mut self.attack_rng,
                    )?),
                    Role::Replayer { victim } => {
                        let observed: Vec<Transaction> = honest.iter().filter(|t| t.sender == *victim).cloned().collect();
                        injected.extend(inject_replay(*id, &observed, &self.keys)?);
                    }
                    Role::Offset | Role::OnRoad => {}
                }
            }
            if let (Some(group), Some(phase)) = (self.group.as_mut(), phase) {
                let v_max = self.config.max_speed_kmh / 3.6;
                injected.extend(group.inject(phase, &self.world, &self.keys, honest_rate, v_max, dt_s)?);
            }
        }

        for tx in honest.into_iter().chain(injected) {
            if !tx.verify() {
                continue;
            }
            self.mempool.admit(MempoolEntry { tx, received_at: now }, &mut self.mempool_rng);
        }
        Ok(())
    }

    fn consensus_round(&mut self) -> Result<()> {
        let now = self.world.time;
        let tip = self.chain.tip();
        let height = tip.height + 1;
        let elapsed = Duration::from_millis(now.saturating_sub(tip.timestamp));
        let attempt = compute_attempt_number(elapsed, self.config.block_time())?;
        let view = view_for_attempt(&tip.hash(), attempt);
        let f = self.config.fault_tolerance;
        let committee = match Electorate::new(&tip.reputation_table).elect(&view, f) {
            Ok(c) => c,
            Err(Error::Election { .. }) => {
                self.election_failures += 1;
                self.consensus.push(ConsensusRow {
                    time_s: now / 1000,
                    height,
                    attempt,
                    harvester: String::new(),
                    approvals: 0,
                    outcome: "no_committee".into(),
                });
                if self.election_failures > MAX_ELECTION_FAILURES {
                    return Err(Error::ElectionExhausted {
                        height,
                        attempts: self.election_failures,
                    });
                }
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        self.election_failures = 0;

        let params = self.config.validation_params();
        let txs: Vec<Transaction> = self.mempool.transactions().cloned().collect();
        let outcome = validate_block(&txs, &self.chain, &tip.reputation_table, &self.ledger, &params);
        let harvester_key: &KeyPair = self.keys.get(&committee.harvester).ok_or(Error::Lookup(committee.harvester))?;
        let mut candidate = Block {
            height,
            prev_hash: tip.hash(),
            attempt,
            timestamp: now,
            harvester: committee.harvester,
            harvester_signature: crate::crypto::Signature::ZERO,
            transactions: txs,
            validity_tags: outcome.validity_tags.clone(),
            reputation_table: outcome.reputation_table.clone(),
            activity_flags: outcome.activity_flags.clone(),
            approvals: Vec::new(),
        };
        candidate.sign_as_harvester(harvester_key);

        // every supporter is honest and shares the chain, so one
        // recomputation serves the whole committee
        let mut memo: Option<(crate::crypto::Hash32, ValidationOutcome)> = None;
        let chain = &self.chain;
        let ledger = &self.ledger;
        let vote = run_vote_round(
            candidate,
            &committee,
            &self.keys,
            |_, block| {
                let hash = block.hash();
                if memo.as_ref().is_none_or(|(h, _)| *h != hash) {
                    let recomputed = validate_block(&block.transactions, chain, &chain.tip().reputation_table, ledger, &params);
                    memo = Some((hash, recomputed));
                }
                memo.as_ref().expect("just set").1.verdict()
            },
            self.quorum(),
        );
        let approvals = vote.approvals();
        let accepted = vote.is_accepted();
        self.consensus.push(ConsensusRow {
            time_s: now / 1000,
            height,
            attempt,
            harvester: committee.harvester.short(),
            approvals,
            outcome: if accepted { "accepted".into() } else { "rejected".into() },
        });
        if let VoteOutcome::Accepted { block, .. } = vote {
            let row = block_metrics(&block, &self.attackers);
            let quorum = self.quorum();
            append_block(&mut self.chain, block, quorum)?;
            self.ledger = outcome.ledger;
            self.mempool.clear();
            self.metrics.push(row);
        }
        Ok(())
    }
}

/// Builds and runs a scenario.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunOutput> {
    Simulation::new(config.clone())?.run()
}

/// Re-derives every committee from the chain itself: the harvester must be
/// the lottery winner for the recorded attempt and every approval must come
/// from an elected supporter. Hash links and quorum are checked too.
pub fn audit_chain(chain: &Blockchain, f: usize, quorum: usize, block_time: Duration) -> Result<()> {
    chain.verify_integrity(quorum)?;
    for pair in chain.blocks().windows(2) {
        let (prev, block) = (&pair[0], &pair[1]);
        let elapsed = Duration::from_millis(block.timestamp.saturating_sub(prev.timestamp));
        let attempt = compute_attempt_number(elapsed, block_time)?;
        if attempt != block.attempt {
            return Err(Error::Malformed(format!(
                "block {} records attempt {} but its timestamp gives {}",
                block.height, block.attempt, attempt
            )));
        }
        let committee = Electorate::new(&prev.reputation_table).elect(&view_for_attempt(&prev.hash(), attempt), f)?;
        if committee.harvester != block.harvester {
            return Err(Error::Malformed(format!("block {} signed by a non-elected harvester", block.height)));
        }
        if let Some(a) = block.approvals.iter().find(|a| !committee.supporters.contains(&a.voter)) {
            return Err(Error::Malformed(format!(
                "block {} approved by {} outside the committee",
                block.height, a.voter
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{Hash32, Signature};
    use crate::geometry::Position;
    use crate::identity::NodeKind;
    use crate::ledger::{ActivityFlags, ReputationTable, Transaction};

    fn node(i: u8) -> NodeId {
        NodeId::new([i; 32], NodeKind::Vehicle)
    }

    fn tx(a: u8, b: u8) -> Transaction {
        Transaction {
            sender: node(a),
            detected: node(b),
            position: Position::new(0.0, 0.0),
            timestamp: 0,
            signature: Signature::ZERO,
        }
    }

    #[test]
    fn metrics_average_active_participants_only() {
        let mut reputation_table = ReputationTable::new();
        let mut activity_flags = ActivityFlags::new();
        for (i, score, active) in [(1, 1000, true), (2, 3000, true), (3, 4096, false), (9, 200, true), (8, 4000, false)] {
            reputation_table.set(node(i), score);
            activity_flags.set(node(i), active);
        }
        let block = Block {
            height: 4,
            prev_hash: Hash32::ZERO,
            attempt: 1,
            timestamp: 240_000,
            harvester: node(1),
            harvester_signature: Signature::ZERO,
            transactions: vec![tx(1, 2), tx(2, 1), tx(9, 1), tx(9, 2), tx(8, 1)],
            validity_tags: vec![
                ValidityTag::Valid,
                ValidityTag::Valid,
                ValidityTag::Valid,
                ValidityTag::Rejected,
                ValidityTag::Blacklisted,
            ],
            reputation_table,
            activity_flags,
            approvals: vec![],
        };
        let attackers: BTreeSet<NodeId> = [node(9), node(8)].into();
        let row = block_metrics(&block, &attackers);
        assert_eq!(row.time_s, 240);
        assert_eq!((row.accepted_tx, row.rejected_tx, row.blacklisted_tx), (3, 1, 1));
        assert_eq!((row.active_legit, row.active_malicious), (2, 1));
        assert_eq!(row.avg_rep_legit, 2000.0);
        assert_eq!(row.avg_rep_malicious, 200.0);
        assert_eq!((row.malicious_tx, row.malicious_accepted_tx), (3, 1));
        assert!((row.malicious_accept_share - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!((row.legit_tx, row.legit_accepted_tx), (2, 2));
    }

    #[test]
    fn no_active_attackers_report_zero() {
        let block = Block {
            height: 1,
            prev_hash: Hash32::ZERO,
            attempt: 1,
            timestamp: 60_000,
            harvester: node(1),
            harvester_signature: Signature::ZERO,
            transactions: vec![],
            validity_tags: vec![],
            reputation_table: ReputationTable::new(),
            activity_flags: ActivityFlags::new(),
            approvals: vec![],
        };
        let row = block_metrics(&block, &BTreeSet::new());
        assert_eq!((row.avg_rep_legit, row.avg_rep_malicious, row.malicious_accept_share), (0.0, 0.0, 0.0));
    }

    #[test]
    fn simulation_audits_cleanly() {
        let config = ScenarioConfig {
            duration_s: 300,
            ..ScenarioConfig::desk()
        };
        let out = run_scenario(&config).unwrap();
        assert_eq!(out.chain.height(), 5);
        audit_chain(&out.chain, config.fault_tolerance, 5, config.block_time()).unwrap();
        // a chain audited against the wrong fault tolerance fails
        assert!(audit_chain(&out.chain, 3, 5, config.block_time()).is_err());
    }
}
