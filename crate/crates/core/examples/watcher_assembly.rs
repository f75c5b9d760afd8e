//! Feed the Watcher a snapshot of three pairs and print each agent's
//! proximal set and constraint matrix layout.

use std::collections::BTreeMap;

use fleet_cbf::cbf::SafetyParams;
use fleet_cbf::geometry::Vec3;
use fleet_cbf::ids::AgentId;
use fleet_cbf::netsim::Pose;
use fleet_cbf::watcher::{TouchdownConfig, Watcher, WatcherConfig};

fn main() {
    let n = 3;
    let params = SafetyParams::default();
    let config = WatcherConfig {
        period: 0.05,
        margin: WatcherConfig::default_margin(params.v_bar, 0.05, 0.03),
        hysteresis: 0.1,
        smoothing: 0.7,
        stale_after: 0.2,
        touchdown: TouchdownConfig::default(),
        capacity: 2 * n + 4,
        conservative: false,
        gate_by_proximity: true,
    };
    let geometry = (0..n as u32).map(|i| (AgentId::ugv(i), (0.1, 0.2))).collect();
    let mut w = Watcher::new(params, config, n, geometry, BTreeMap::new());

    let uavs = [Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.9, 0.2, 1.2), Vec3::new(4.0, 4.0, 1.0)];
    let ugvs = [(0.5, -0.8, 0.0), (1.5, -0.5, 1.0), (-4.0, 3.0, 0.0)];
    for t in [0.0, 0.05] {
        for i in 0..n {
            w.observe(AgentId::uav(i as u32), Pose::Uav(uavs[i] + Vec3::new(0.02 * t, 0.0, 0.0)), t);
            let (x, y, theta) = ugvs[i];
            w.observe(AgentId::ugv(i as u32), Pose::Ugv { x, y, theta }, t);
        }
    }
    w.update_proximity();
    for id in w.agents().collect::<Vec<_>>() {
        let m = w.assemble_constraints(id, 0.05).unwrap();
        let proximal: Vec<String> = w.proximal_of(id).iter().map(ToString::to_string).collect();
        let kinds: Vec<String> = m.kinds().iter().map(ToString::to_string).collect();
        println!("{id}: {}/{} rows [{}] proximal {{{}}}", m.active_count(), m.capacity(), kinds.join(" "), proximal.join(", "));
    }
}
