use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// A planar position in meters on a local tangent plane.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const ORIGIN: Position = Position { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Moves toward `target` by at most `step` meters; returns the new
    /// position and whether the target was reached.
    pub fn step_toward(&self, target: &Position, step: f64) -> (Position, bool) {
        let gap = self.distance(target);
        if gap <= step {
            return (*target, true);
        }
        let frac = step / gap;
        (
            Position::new(
                self.x + (target.x - self.x) * frac,
                self.y + (target.y - self.y) * frac,
            ),
            false,
        )
    }
}

/// A displacement or velocity in the plane.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Vector {
    pub dx: f64,
    pub dy: f64,
}

impl Vector {
    pub const ZERO: Vector = Vector { dx: 0.0, dy: 0.0 };

    pub fn new(dx: f64, dy: f64) -> Self {
        Vector { dx, dy }
    }

    pub fn norm(&self) -> f64 {
        self.dx.hypot(self.dy)
    }
}

impl Add<Vector> for Position {
    type Output = Position;

    fn add(self, v: Vector) -> Position {
        Position::new(self.x + v.dx, self.y + v.dy)
    }
}

impl Sub for Position {
    type Output = Vector;

    fn sub(self, other: Position) -> Vector {
        Vector::new(self.x - other.x, self.y - other.y)
    }
}
