//! Synthetic vehicular world: mobility, short-range detection and the
//! probe/reply exchanges that turn into transactions.

use std::collections::BTreeMap;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Position, Vector};
use crate::identity::{KeyStore, NodeId};
use crate::ledger::{Millis, Transaction};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: Position,
    pub velocity: Vector,
    pub waypoint: Position,
    /// Cruise speed of the current leg, m/s.
    pub speed: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub time: Millis,
    pub vehicles: BTreeMap<NodeId, VehicleState>,
    pub rsus: BTreeMap<NodeId, Position>,
}

impl WorldState {
    pub fn position_of(&self, node: &NodeId) -> Option<Position> {
        self.vehicles
            .get(node)
            .map(|v| v.position)
            .or_else(|| self.rsus.get(node).copied())
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, Position)> + '_ {
        self.vehicles
            .iter()
            .map(|(id, v)| (*id, v.position))
            .chain(self.rsus.iter().map(|(id, p)| (*id, *p)))
    }

    pub fn len(&self) -> usize {
        self.vehicles.len() + self.rsus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty() && self.rsus.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityKind {
    /// Straight legs to uniformly drawn waypoints in the area.
    #[default]
    RandomWaypoint,
    /// Legs between adjacent intersections of a square road grid.
    GridRoads,
}

/// Seeded mobility substrate.
#[derive(Clone, Debug)]
pub struct MobilityModel {
    pub kind: MobilityKind,
    pub width: f64,
    pub height: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    pub grid_spacing: f64,
    rng: ChaCha8Rng,
}

impl MobilityModel {
    pub fn new(
        kind: MobilityKind,
        width: f64,
        height: f64,
        min_speed: f64,
        max_speed: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) {
            return Err(Error::config("area must have positive width and height"));
        }
        if !(0.0 < min_speed && min_speed <= max_speed) {
            return Err(Error::config("speeds must satisfy 0 < min <= max"));
        }
        Ok(MobilityModel {
            kind,
            width,
            height,
            min_speed,
            max_speed,
            grid_spacing: 100.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn with_grid_spacing(mut self, spacing: f64) -> Self {
        self.grid_spacing = spacing;
        self
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn grid_cells(&self) -> (i64, i64) {
        (
            (self.width / self.grid_spacing).floor().max(1.0) as i64,
            (self.height / self.grid_spacing).floor().max(1.0) as i64,
        )
    }

    /// A fresh position for a newly placed node.
    pub fn random_position(&mut self) -> Position {
        match self.kind {
            MobilityKind::RandomWaypoint => Position::new(
                self.rng.random_range(0.0..=self.width),
                self.rng.random_range(0.0..=self.height),
            ),
            MobilityKind::GridRoads => {
                let (cx, cy) = self.grid_cells();
                let i = self.rng.random_range(0..=cx);
                let j = self.rng.random_range(0..=cy);
                Position::new(i as f64 * self.grid_spacing, j as f64 * self.grid_spacing)
            }
        }
    }

    fn next_waypoint(&mut self, from: &Position) -> Position {
        match self.kind {
            MobilityKind::RandomWaypoint => self.random_position(),
            MobilityKind::GridRoads => {
                let (cx, cy) = self.grid_cells();
                let i = (from.x / self.grid_spacing).round() as i64;
                let j = (from.y / self.grid_spacing).round() as i64;
                let moves: Vec<(i64, i64)> = [(1, 0), (-1, 0), (0, 1), (0, -1)]
                    .into_iter()
                    .map(|(di, dj)| (i + di, j + dj))
                    .filter(|&(a, b)| (0..=cx).contains(&a) && (0..=cy).contains(&b))
                    .collect();
                let (a, b) = moves[self.rng.random_range(0..moves.len())];
                Position::new(a as f64 * self.grid_spacing, b as f64 * self.grid_spacing)
            }
        }
    }

    fn leg_speed(&mut self) -> f64 {
        if self.min_speed == self.max_speed {
            self.max_speed
        } else {
            self.rng.random_range(self.min_speed..self.max_speed)
        }
    }

    /// Places a vehicle with its first waypoint already drawn.
    pub fn spawn(&mut self) -> VehicleState {
        let position = self.random_position();
        let waypoint = self.next_waypoint(&position);
        let speed = self.leg_speed();
        VehicleState {
            position,
            velocity: Vector::ZERO,
            waypoint,
            speed,
        }
    }
}

/// Advances every vehicle by `dt` toward its waypoint. A vehicle that
/// arrives stops there for the rest of the step and draws its next leg.
pub fn step_world(state: &mut WorldState, dt: Duration, model: &mut MobilityModel) {
    let secs = dt.as_secs_f64();
    for vehicle in state.vehicles.values_mut() {
        let before = vehicle.position;
        let (next, arrived) = before.step_toward(&vehicle.waypoint, vehicle.speed * secs);
        vehicle.position = next;
        vehicle.velocity = if secs > 0.0 {
            let d = next - before;
            Vector::new(d.dx / secs, d.dy / secs)
        } else {
            Vector::ZERO
        };
        if arrived {
            vehicle.waypoint = model.next_waypoint(&next);
            vehicle.speed = model.leg_speed();
        }
    }
    state.time += dt.as_millis() as Millis;
}

/// Every vehicle or RSU within `range` of `sender` (closed ball), sorted by id.
pub fn detect_neighbors(state: &WorldState, sender: &NodeId, range: f64) -> Result<Vec<NodeId>> {
    let origin = state.position_of(sender).ok_or(Error::Lookup(*sender))?;
    Ok(neighbors_of(state, sender, &origin, range))
}

fn neighbors_of(state: &WorldState, sender: &NodeId, origin: &Position, range: f64) -> Vec<NodeId> {
    // vehicles and rsus are separate sorted maps, so merge by id
    let mut out: Vec<NodeId> = state
        .nodes()
        .filter(|(id, pos)| id != sender && pos.distance(origin) <= range)
        .map(|(id, _)| id)
        .collect();
    out.sort();
    out
}

/// One probe/reply exchange: `prober` heard `responder` while at `position`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub prober: NodeId,
    pub responder: NodeId,
    pub position: Position,
    pub time: Millis,
}

/// All ordered in-range pairs among nodes for which `responsive` holds.
/// Detection is symmetric, so every pair appears in both directions.
pub fn probe_cycle(
    state: &WorldState,
    range: f64,
    responsive: impl Fn(&NodeId) -> bool,
) -> Vec<Detection> {
    let nodes: Vec<(NodeId, Position)> = {
        let mut v: Vec<_> = state.nodes().filter(|(id, _)| responsive(id)).collect();
        v.sort_by_key(|a| a.0);
        v
    };
    let mut out = Vec::new();
    for (prober, origin) in &nodes {
        for (responder, pos) in &nodes {
            if prober != responder && pos.distance(origin) <= range {
                out.push(Detection {
                    prober: *prober,
                    responder: *responder,
                    position: *origin,
                    time: state.time,
                });
            }
        }
    }
    out
}

/// Signs one transaction per detection, at the prober's true position.
pub fn sign_detections(detections: &[Detection], keys: &KeyStore) -> Result<Vec<Transaction>> {
    detections
        .iter()
        .map(|d| {
            let key = keys.get(&d.prober).ok_or(Error::Lookup(d.prober))?;
            Ok(Transaction::signed(d.prober, d.responder, d.position, d.time, key))
        })
        .collect()
}

/// Honest transactions of one probe cycle for every node in the world.
pub fn generate_transactions(state: &WorldState, range: f64, keys: &KeyStore) -> Result<Vec<Transaction>> {
    sign_detections(&probe_cycle(state, range, |_| true), keys)
}
