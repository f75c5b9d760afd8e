//! Piecewise-linear waypoint tasks traversed at constant speed.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

/// Waypoints visited in order at `speed` (m/s). A cyclic task loops back to
/// the first waypoint after the last one; the start position is not revisited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct WaypointTask {
    #[serde(default)]
    pub waypoints: Vec<Vec3>,
    #[serde(default)]
    pub speed: f64,
    #[serde(default)]
    pub cyclic: bool,
}

/// A task anchored at the agent's start position.
#[derive(Debug, Clone, PartialEq)]
pub struct SetpointPath {
    lead: Vec<Vec3>,
    cycle: Vec<Vec3>,
    speed: f64,
}

fn length(points: &[Vec3]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Walk `s` meters along a polyline; returns the point and the unit direction.
fn walk(points: &[Vec3], mut s: f64) -> (Vec3, Vec3) {
    for w in points.windows(2) {
        let d = w[1] - w[0];
        let len = d.norm();
        if len == 0.0 {
            continue;
        }
        if s <= len {
            let dir = d * (1.0 / len);
            return (w[0] + dir * s, dir);
        }
        s -= len;
    }
    (*points.last().expect("non-empty polyline"), Vec3::ZERO)
}

impl SetpointPath {
    pub fn new(start: Vec3, task: &WaypointTask) -> Self {
        let mut lead = vec![start];
        let cycle = if task.cyclic && task.waypoints.len() > 1 {
            lead.push(task.waypoints[0]);
            let mut c = task.waypoints.clone();
            c.push(task.waypoints[0]);
            c
        } else {
            lead.extend(task.waypoints.iter().copied());
            Vec::new()
        };
        Self { lead, cycle, speed: task.speed.max(0.0) }
    }

    /// Setpoint position and rate at time `t` since the task started.
    pub fn sample(&self, t: f64) -> (Vec3, Vec3) {
        let s = self.speed * t.max(0.0);
        let lead_len = length(&self.lead);
        if self.speed == 0.0 {
            return (self.lead[0], Vec3::ZERO);
        }
        if s < lead_len {
            let (p, dir) = walk(&self.lead, s);
            return (p, dir * self.speed);
        }
        let cycle_len = length(&self.cycle);
        if cycle_len > 0.0 {
            let (p, dir) = walk(&self.cycle, (s - lead_len) % cycle_len);
            return (p, dir * self.speed);
        }
        (*self.lead.last().expect("non-empty"), Vec3::ZERO)
    }

    /// Final point of a non-cyclic task, or `None` for a cyclic one.
    pub fn end(&self) -> Option<Vec3> {
        if self.cycle.is_empty() {
            self.lead.last().copied()
        } else {
            None
        }
    }
}
