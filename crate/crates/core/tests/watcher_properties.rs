use std::collections::BTreeMap;

use fleet_cbf::cbf::{RowKind, SafetyParams};
use fleet_cbf::geometry::Vec3;
use fleet_cbf::ids::{AgentId, NodeId};
use fleet_cbf::netsim::{Payload, Pose};
use fleet_cbf::watcher::{EstimateQuality, LandingOutcome, PairPhase, TouchdownConfig, Watcher, WatcherConfig};
use proptest::prelude::*;

fn config(n: usize, margin: f64, gate: bool) -> WatcherConfig {
    WatcherConfig {
        period: 0.05,
        margin,
        hysteresis: 0.2,
        smoothing: 0.7,
        stale_after: 0.2,
        touchdown: TouchdownConfig::default(),
        capacity: 2 * n + 4,
        conservative: false,
        gate_by_proximity: gate,
    }
}

fn watcher(n: usize, margin: f64, gate: bool) -> Watcher {
    let geometry = (0..n as u32).map(|i| (AgentId::ugv(i), (0.1, 0.2))).collect();
    Watcher::new(SafetyParams::default(), config(n, margin, gate), n, geometry, BTreeMap::new())
}

type Layout = Vec<(Vec3, (f64, f64, f64))>;

fn layout() -> impl Strategy<Value = Layout> {
    let uav = (-4.0f64..4.0, -4.0f64..4.0, 0.5f64..2.0).prop_map(|(x, y, z)| Vec3::new(x, y, z));
    let ugv = (-4.0f64..4.0, -4.0f64..4.0, -3.1f64..3.1);
    prop::collection::vec((uav, ugv), 1..5)
}

fn observe_all(w: &mut Watcher, layout: &Layout, t: f64) {
    for (i, (p, (x, y, theta))) in layout.iter().enumerate() {
        w.observe(AgentId::uav(i as u32), Pose::Uav(*p), t);
        w.observe(AgentId::ugv(i as u32), Pose::Ugv { x: *x, y: *y, theta: *theta }, t);
    }
}

fn rank(kind: RowKind) -> usize {
    match kind {
        RowKind::Box => 0,
        RowKind::Ago | RowKind::Gg => 1,
        RowKind::Agc => 2,
        RowKind::Aa => 3,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rows_follow_the_fixed_order_and_padding_is_zero(layout in layout(), margin in 0.0f64..3.0) {
        let n = layout.len();
        let mut w = watcher(n, margin, true);
        observe_all(&mut w, &layout, 0.0);
        w.update_proximity();
        for id in w.agents().collect::<Vec<_>>() {
            let m = w.assemble_constraints(id, 0.0).unwrap();
            let kinds = m.kinds();
            prop_assert!(kinds.windows(2).all(|k| rank(k[0]) <= rank(k[1])), "{:?}", kinds);
            prop_assert!(m.padding_is_zero());
            prop_assert!(m.active_count() <= m.capacity());
            if id.is_uav() {
                prop_assert_eq!(m.count(RowKind::Box), 5);
                prop_assert_eq!(m.count(RowKind::Agc), 1);
                prop_assert_eq!(m.count(RowKind::Gg), 0);
            } else {
                prop_assert_eq!(m.count(RowKind::Box), 4);
                prop_assert_eq!(m.active_count(), 4 + m.count(RowKind::Gg));
            }
        }
    }

    #[test]
    fn smaller_margin_never_adds_rows(layout in layout(), small in 0.0f64..2.0, extra in 0.0f64..2.0) {
        let n = layout.len();
        let mut tight = watcher(n, small, true);
        let mut loose = watcher(n, small + extra, true);
        observe_all(&mut tight, &layout, 0.0);
        observe_all(&mut loose, &layout, 0.0);
        tight.update_proximity();
        loose.update_proximity();
        for id in tight.agents().collect::<Vec<_>>() {
            prop_assert!(tight.proximal_of(id).is_subset(&loose.proximal_of(id)));
            let a = tight.assemble_constraints(id, 0.0).unwrap().active_count();
            let b = loose.assemble_constraints(id, 0.0).unwrap().active_count();
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn ungated_matrices_fill_capacity(layout in layout()) {
        let n = layout.len();
        let mut w = watcher(n, 0.0, false);
        observe_all(&mut w, &layout, 0.0);
        w.update_proximity();
        for i in 0..n as u32 {
            prop_assert_eq!(w.assemble_constraints(AgentId::uav(i), 0.0).unwrap().active_count(), 2 * n + 4);
            prop_assert_eq!(w.assemble_constraints(AgentId::ugv(i), 0.0).unwrap().active_count(), n + 3);
        }
    }
}

#[test]
fn isolated_uav_has_box_and_landing_rows_only() {
    let layout = vec![(Vec3::new(-4.0, -4.0, 1.0), (-4.0, -4.0, 0.0)), (Vec3::new(4.0, 4.0, 1.0), (4.0, 4.0, 0.0))];
    let mut w = watcher(2, 0.5, true);
    observe_all(&mut w, &layout, 0.0);
    w.update_proximity();
    let m = w.assemble_constraints(AgentId::uav(0), 0.0).unwrap();
    assert_eq!(m.active_count(), 6);
    assert_eq!(m.kinds(), [[RowKind::Box; 5].as_slice(), &[RowKind::Agc]].concat());
}

#[test]
fn hysteresis_stops_chattering_at_the_threshold() {
    // UAV 1 oscillates by 5 cm around the activation distance of UAV 0.
    let params = SafetyParams::default();
    let margin = 0.5;
    let d_act = params.s_a + margin;
    let mut w = watcher(2, margin, true);
    let mut flips = 0;
    let mut last = false;
    for k in 0..40 {
        let t = k as f64 * 0.05;
        let d = d_act + if k % 2 == 0 { -0.05 } else { 0.05 };
        w.observe(AgentId::uav(0), Pose::Uav(Vec3::new(0.0, 0.0, 1.0)), t);
        w.observe(AgentId::uav(1), Pose::Uav(Vec3::new(d, 0.0, 1.0)), t);
        w.observe(AgentId::ugv(0), Pose::Ugv { x: -4.0, y: -4.0, theta: 0.0 }, t);
        w.observe(AgentId::ugv(1), Pose::Ugv { x: 4.0, y: -4.0, theta: 0.0 }, t);
        w.update_proximity();
        let now = w.proximal_of(AgentId::uav(0)).contains(&AgentId::uav(1));
        flips += usize::from(now != last);
        last = now;
    }
    assert_eq!(flips, 1);
    assert!(last);
}

#[test]
fn estimator_converges_on_constant_velocity() {
    let mut w = watcher(1, 0.5, true);
    for k in 0..5 {
        let t = k as f64 * 0.05;
        w.observe(AgentId::uav(0), Pose::Uav(Vec3::new(t, 0.0, 1.0)), t);
    }
    let est = w.velocity_estimate(AgentId::uav(0), 0.2).unwrap();
    assert_eq!(est.quality, EstimateQuality::Smoothed);
    assert!((est.v - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-9);
}

#[test]
fn touchdown_retires_only_agent_agent_rows() {
    let mut w = watcher(2, 1.0, true);
    let params = SafetyParams::default();
    let pad = params.z_platform + params.gamma;
    assert_eq!(w.handle_landing_signal(0, 0.0).unwrap(), LandingOutcome::Started);
    assert_eq!(w.handle_landing_signal(0, 0.0).unwrap(), LandingOutcome::AlreadyLanding);
    assert!(w.handle_landing_signal(5, 0.0).is_err());
    let mut landed_at = None;
    for k in 0..20 {
        let t = k as f64 * 0.05;
        w.observe(AgentId::uav(0), Pose::Uav(Vec3::new(0.0, 0.0, pad)), t);
        w.observe(AgentId::ugv(0), Pose::Ugv { x: 0.0, y: 0.0, theta: 0.0 }, t);
        w.observe(AgentId::uav(1), Pose::Uav(Vec3::new(0.8, 0.0, 1.0)), t);
        w.observe(AgentId::ugv(1), Pose::Ugv { x: 1.5, y: 0.0, theta: 0.0 }, t);
        let out = w.tick(t).unwrap();
        if out.iter().any(|(dst, p)| *dst == NodeId::Agent(AgentId::uav(0)) && *p == Payload::TouchdownAck) {
            landed_at = Some(t);
        }
    }
    let t = landed_at.expect("touchdown acknowledged");
    assert!(t + 1e-9 >= TouchdownConfig::default().hold);
    assert_eq!(w.pairing().phase(0), Some(PairPhase::Landed));
    assert_eq!(w.handle_landing_signal(0, 1.0).unwrap(), LandingOutcome::AlreadyLanded);

    let landed = w.assemble_constraints(AgentId::uav(0), 1.0).unwrap();
    assert_eq!(landed.active_count(), 0);
    // The neighbour loses its AA row but keeps the AGO row to the carrier.
    let other = w.assemble_constraints(AgentId::uav(1), 1.0).unwrap();
    assert_eq!(other.count(RowKind::Aa), 0);
    assert_eq!(other.count(RowKind::Ago), 1);
    let ugv = w.assemble_constraints(AgentId::ugv(1), 1.0).unwrap();
    assert_eq!(ugv.count(RowKind::Gg), 1);
}
