//! Seeded scenario families used by the examples and the test suites.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::Vec3;
use crate::task::WaypointTask;

use super::config::{validate, LandingEvent, PairSpec, ScenarioConfig, UavSpec, UgvSpec};

fn base(seed: u64, duration: f64, pairs: Vec<PairSpec>) -> ScenarioConfig {
    let text = format!("seed = {seed}\nduration = {duration}\npairs = []\n");
    let mut c: ScenarioConfig = toml::from_str(&text).expect("base config parses");
    c.pairs = pairs;
    c
}

fn polar(r: f64, phi: f64, z: f64) -> Vec3 {
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

/// `n` pairs on a ring, every agent shuttling across the center and back.
/// Resamples until the layout passes validation.
pub fn crossing(seed: u64, n: usize, duration: f64) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut pairs = Vec::with_capacity(n);
        for i in 0..n {
            let slot = TAU * i as f64 / n as f64;
            let phi = slot + rng.random_range(-0.3..0.3);
            let start = polar(rng.random_range(3.0..4.0), phi, rng.random_range(1.0..2.0));
            let across = polar(rng.random_range(3.0..4.0), phi + PI + rng.random_range(-0.4..0.4), rng.random_range(1.0..2.0));
            let uav = UavSpec {
                position: start,
                task: WaypointTask { waypoints: vec![across, start], speed: rng.random_range(0.3..0.6), cyclic: true },
            };

            let psi = slot + PI / n as f64 + rng.random_range(-0.3..0.3);
            let body = polar(rng.random_range(3.0..3.8), psi, 0.0);
            let goal = polar(rng.random_range(3.0..3.8), psi + PI + rng.random_range(-0.4..0.4), 0.0);
            let heading = (goal.y - body.y).atan2(goal.x - body.x);
            let offset = 0.1;
            let rho = Vec3::new(body.x + offset * heading.cos(), body.y + offset * heading.sin(), 0.0);
            let ugv = UgvSpec {
                pose: [body.x, body.y, heading],
                offset,
                wheel_base: 0.2,
                task: WaypointTask { waypoints: vec![goal, rho], speed: rng.random_range(0.2..0.5), cyclic: true },
            };
            pairs.push(PairSpec { uav, ugv });
        }
        let c = base(seed, duration, pairs);
        if validate(&c).is_ok() {
            return c;
        }
    }
}

/// Regular polygon approximating a circle, starting at angle `phase`.
fn loop_waypoints(center: Vec3, radius: f64, phase: f64, vertices: usize) -> Vec<Vec3> {
    (1..=vertices)
        .map(|k| center + polar(radius, phase + TAU * k as f64 / vertices as f64, 0.0))
        .collect()
}

/// Two pairs whose UGVs drive closed loops at 0.3-0.5 m/s while the UAVs
/// hover; each pair gets a landing signal a few seconds in. The run lasts
/// 45 s past the last signal.
pub fn landing(seed: u64) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut pairs = Vec::new();
        let mut events = Vec::new();
        for (i, side) in [-1.0, 1.0].into_iter().enumerate() {
            let center = Vec3::new(2.6 * side, rng.random_range(-0.5..0.5), 0.0);
            let radius = rng.random_range(1.4..1.9);
            let phase = rng.random_range(0.0..TAU);
            let offset = 0.1;
            let body = center + polar(radius, phase, 0.0);
            let heading = phase + PI / 2.0;
            let ugv = UgvSpec {
                pose: [body.x, body.y, heading],
                offset,
                wheel_base: 0.2,
                task: WaypointTask {
                    waypoints: loop_waypoints(center, radius, phase, 24),
                    speed: rng.random_range(0.3..0.5),
                    cyclic: true,
                },
            };
            let uav = UavSpec {
                position: Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(1.5..2.5)),
                task: WaypointTask::default(),
            };
            pairs.push(PairSpec { uav, ugv });
            events.push(LandingEvent { time: rng.random_range(3.0..8.0), pair: i as u32 });
        }
        let last = events.iter().map(|e| e.time).fold(0.0, f64::max);
        let mut c = base(seed, (last + 45.0).ceil(), pairs);
        c.landing = events;
        if validate(&c).is_ok() {
            return c;
        }
    }
}

/// `n` pairs packed close together with an activation margin large enough
/// that every agent is proximal to every other for the whole run.
pub fn fully_proximal(n: usize, duration: f64) -> ScenarioConfig {
    let mut pairs = Vec::new();
    for i in 0..n {
        let phi = TAU * i as f64 / n as f64;
        let start = polar(1.0, phi, 1.5);
        let body = polar(1.5, phi + PI / n as f64, 0.0);
        pairs.push(PairSpec {
            uav: UavSpec {
                position: start,
                task: WaypointTask { waypoints: vec![polar(1.5, phi, 1.5), start], speed: 0.2, cyclic: true },
            },
            ugv: UgvSpec {
                pose: [body.x, body.y, phi],
                offset: 0.1,
                wheel_base: 0.2,
                task: WaypointTask::default(),
            },
        });
    }
    let mut c = base(0, duration, pairs);
    c.watcher.margin = Some(50.0);
    c
}
