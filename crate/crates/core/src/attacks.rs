//! Attack injectors. Each one produces the transactions an attacker
//! broadcasts in a probe cycle in place of (or next to) honest ones.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Position, Vector};
use crate::identity::{KeyStore, NodeId};
use crate::ledger::{Millis, Transaction};
use crate::world::WorldState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    #[default]
    None,
    RandomSpam,
    OffsetPosition,
    Replay,
    CoordinatedGroup,
}

/// Attack section of a scenario. Kind-specific fields are ignored by the
/// other kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Share of vehicles turned into attackers (uncoordinated kinds).
    pub fraction: f64,
    /// Explicit attacker vehicles by creation index; overrides `fraction`.
    pub attacker_indices: Option<Vec<usize>>,
    pub start_s: u64,
    /// Keep answering probes and emitting true transactions while attacking.
    pub honest_in_parallel: bool,
    pub spam_multiplier: f64,
    pub offset: [f64; 2],
    pub per_tx_offset: bool,
    /// Radius of the fresh per-transaction offsets, meters.
    pub offset_radius: f64,
    /// Members including the on-road vehicle.
    pub group_size: usize,
    pub fake_target: [f64; 2],
    pub build_rounds: u64,
    pub sustain_rounds: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            kind: AttackKind::None,
            fraction: 0.0,
            attacker_indices: None,
            start_s: 300,
            honest_in_parallel: false,
            spam_multiplier: 3.0,
            offset: [20_000.0, 0.0],
            per_tx_offset: false,
            offset_radius: 50_000.0,
            group_size: 5,
            fake_target: [0.0, 0.0],
            build_rounds: 5,
            sustain_rounds: 5,
        }
    }
}

impl AttackConfig {
    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::config("attack.fraction must be in [0, 1]"));
        }
        if self.kind == AttackKind::RandomSpam && (self.spam_multiplier.is_nan() || self.spam_multiplier < 1.0) {
            return Err(Error::config("attack.spam_multiplier must be >= 1"));
        }
        if self.kind == AttackKind::OffsetPosition {
            if !self.offset.iter().all(|c| c.is_finite()) {
                return Err(Error::config("attack.offset must be finite"));
            }
            if self.per_tx_offset && !(self.offset_radius > 0.0 && self.offset_radius.is_finite()) {
                return Err(Error::config("attack.offset_radius must be positive"));
            }
        }
        if self.kind == AttackKind::CoordinatedGroup && self.group_size < 2 {
            return Err(Error::config("attack.group_size must be at least 2"));
        }
        Ok(())
    }

    pub fn offset_vector(&self) -> Vector {
        Vector::new(self.offset[0], self.offset[1])
    }

    /// Number of vehicles that attack individually.
    pub fn attacker_count(&self, num_vehicles: usize) -> usize {
        match self.kind {
            AttackKind::None => 0,
            AttackKind::CoordinatedGroup => 1.min(num_vehicles),
            _ => match &self.attacker_indices {
                Some(ix) => ix.iter().filter(|&&i| i < num_vehicles).count(),
                None => (self.fraction * num_vehicles as f64).round() as usize,
            },
        }
    }
}

/// `ceil(multiplier * honest_rate)` transactions from random positions in
/// the area toward random roster members.
#[allow(clippy::too_many_arguments)]
pub fn inject_random_spam<R: Rng + ?Sized>(
    attacker: NodeId,
    keys: &KeyStore,
    roster: &[NodeId],
    area: (f64, f64),
    honest_rate: f64,
    multiplier: f64,
    time: Millis,
    rng: &mut R,
) -> Result<Vec<Transaction>> {
    let key = keys.get(&attacker).ok_or(Error::Lookup(attacker))?;
    let targets: Vec<&NodeId> = roster.iter().filter(|id| **id != attacker).collect();
    if targets.is_empty() {
        return Ok(Vec::new());
    }
    let count = (multiplier * honest_rate).ceil().max(0.0) as usize;
    Ok((0..count)
        .map(|_| {
            let position = Position::new(rng.random_range(0.0..=area.0), rng.random_range(0.0..=area.1));
            let detected = *targets[rng.random_range(0..targets.len())];
            Transaction::signed(attacker, detected, position, time, key)
        })
        .collect())
}

/// The position an offset attacker advertises instead of `true_position`.
pub fn inject_offset_position<R: Rng + ?Sized>(
    true_position: Position,
    offset: Vector,
    per_tx: bool,
    radius: f64,
    rng: &mut R,
) -> Position {
    if !per_tx {
        return true_position + offset;
    }
    // uniform in the disc
    let r = radius * rng.random::<f64>().sqrt();
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    true_position + Vector::new(r * theta.cos(), r * theta.sin())
}

/// Copies every observed transaction under the attacker's identity.
pub fn inject_replay(attacker: NodeId, observed: &[Transaction], keys: &KeyStore) -> Result<Vec<Transaction>> {
    let key = keys.get(&attacker).ok_or(Error::Lookup(attacker))?;
    Ok(observed
        .iter()
        .filter(|tx| tx.detected != attacker)
        .map(|tx| Transaction::signed(attacker, tx.detected, tx.position, tx.timestamp, key))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupPhase {
    BuildReputation,
    SelfSustain,
    FakeCongestion,
}

/// A colluding group: one real vehicle on the road and off-road members
/// that exist only as keys and advertise positions around it.
#[derive(Clone, Debug)]
pub struct GroupAttack {
    pub onroad: NodeId,
    pub offroad: Vec<NodeId>,
    pub fake_target: Position,
    pub build_rounds: u64,
    pub sustain_rounds: u64,
    /// Fixed displacement of each off-road member from the anchor.
    slots: BTreeMap<NodeId, Vector>,
    anchor: Option<Position>,
    cycle: u64,
}

impl GroupAttack {
    /// Creates `group_size - 1` off-road identities under the `"group"` key
    /// namespace and spreads them within `range / 2` of the anchor.
    pub fn new<R: Rng + ?Sized>(
        config: &AttackConfig,
        onroad: NodeId,
        keys: &mut KeyStore,
        seed: u64,
        range: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if config.group_size < 2 {
            return Err(Error::config("coordinated group needs at least 2 members"));
        }
        let mut slots = BTreeMap::new();
        let mut offroad = Vec::new();
        for i in 0..config.group_size - 1 {
            let id = keys.create(seed, "group", i as u64, crate::identity::NodeKind::Vehicle);
            let r = 0.5 * range * rng.random::<f64>().sqrt();
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            slots.insert(id, Vector::new(r * theta.cos(), r * theta.sin()));
            offroad.push(id);
        }
        offroad.sort();
        Ok(GroupAttack {
            onroad,
            offroad,
            fake_target: Position::new(config.fake_target[0], config.fake_target[1]),
            build_rounds: config.build_rounds,
            sustain_rounds: config.sustain_rounds,
            slots,
            anchor: None,
            cycle: 0,
        })
    }

    pub fn members(&self) -> impl Iterator<Item = &NodeId> {
        std::iter::once(&self.onroad).chain(self.offroad.iter())
    }

    /// Phase for the given number of block rounds since the attack began.
    pub fn phase_at(&self, rounds: u64) -> GroupPhase {
        if rounds < self.build_rounds {
            GroupPhase::BuildReputation
        } else if rounds < self.build_rounds + self.sustain_rounds {
            GroupPhase::SelfSustain
        } else {
            GroupPhase::FakeCongestion
        }
    }

    pub fn anchor(&self) -> Option<Position> {
        self.anchor
    }

    /// Whether the on-road member still answers probes in `phase`.
    pub fn onroad_participates(phase: GroupPhase) -> bool {
        phase == GroupPhase::BuildReputation
    }

    /// Reciprocal pairs among the off-road members for one probe cycle.
    ///
    /// Each member talks to `ceil(rate)` partners, rotating through the
    /// group from cycle to cycle. `dt_s` is the time since the previous
    /// cycle and bounds how far the anchor may move toward the fake target.
    pub fn inject(
        &mut self,
        phase: GroupPhase,
        state: &WorldState,
        keys: &KeyStore,
        rate: f64,
        v_max: f64,
        dt_s: f64,
    ) -> Result<Vec<Transaction>> {
        let anchor = match (phase, self.anchor) {
            (GroupPhase::BuildReputation, _) | (_, None) => {
                state.position_of(&self.onroad).ok_or(Error::Lookup(self.onroad))?
            }
            (GroupPhase::SelfSustain, Some(a)) => a,
            (GroupPhase::FakeCongestion, Some(a)) => a.step_toward(&self.fake_target, v_max * dt_s).0,
        };
        self.anchor = Some(anchor);

        let n = self.offroad.len();
        let mut out = Vec::new();
        if n < 2 {
            self.cycle += 1;
            return Ok(out);
        }
        let partners = (rate.ceil().max(1.0) as usize).min(n - 1);
        let mut pairs = std::collections::BTreeSet::new();
        for j in 0..partners.div_ceil(2) {
            let shift = 1 + (self.cycle as usize + j) % (n - 1);
            for i in 0..n {
                let k = (i + shift) % n;
                pairs.insert((i.min(k), i.max(k)));
            }
        }
        for (a, b) in pairs {
            for (s, d) in [(a, b), (b, a)] {
                let sender = self.offroad[s];
                let key = keys.get(&sender).ok_or(Error::Lookup(sender))?;
                let position = anchor + self.slots[&sender];
                out.push(Transaction::signed(sender, self.offroad[d], position, state.time, key));
            }
        }
        self.cycle += 1;
        Ok(out)
    }
}
