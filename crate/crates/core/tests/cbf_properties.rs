mod common;

use fleet_cbf::cbf::{
    build_constraint_row, eval_aa, eval_ago, eval_gg, eval_landing, funnel_height, landing_gradient, landing_time_term,
    verify_validity, BoxFace, BoxPoint, Motion, RowKind, RowSpec, SafetyParams,
};
use fleet_cbf::geometry::{Vec2, Vec3};
use proptest::prelude::*;

use common::{central_gradient, relative_error};

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn vec2(range: f64) -> impl Strategy<Value = Vec2> {
    (-range..range, -range..range).prop_map(|(x, y)| Vec2::new(x, y))
}

fn params() -> SafetyParams {
    SafetyParams::default()
}

#[test]
fn documented_row_examples() {
    let p = params();
    let aa = build_constraint_row(
        RowSpec::Aa {
            own: Vec3::new(1.0, 0.0, 0.0),
            other: Vec3::ZERO,
            other_motion: Some(Motion::Known(Vec3::new(0.2, 0.0, 0.0))),
            other_id: None,
        },
        &p,
    )
    .unwrap();
    assert_eq!(aa.a, vec![2.0, 0.0, 0.0]);
    assert!((aa.h_value - 0.75).abs() < 1e-15);
    assert!((aa.b - 0.35).abs() < 1e-15);
    assert!(verify_validity(&aa, 1.0));

    let lg = SafetyParams { alpha: 1.0, beta: 2.0, gamma: 0.1, ..p };
    let ev = eval_landing(Vec3::new(0.0, 0.0, 0.5), Vec3::ZERO, 1.0, 2.0, 0.1).unwrap();
    assert!((ev.h - 0.4).abs() < 1e-15 && ev.l == 0.0 && ev.k == -4.0);
    let peak = eval_landing(Vec3::new(1.0, 0.0, 0.5), Vec3::ZERO, lg.alpha, lg.beta, lg.gamma).unwrap();
    assert!(peak.k.abs() < 1e-15);
    assert!((funnel_height(1.0, 1.0, 2.0, 0.1) - (2.0 / std::f64::consts::E + 0.1)).abs() < 1e-15);
    assert_eq!(landing_gradient(Vec3::new(1.0, 0.0, 0.5), peak.k), Vec3::new(peak.k, 0.0, 1.0));
    assert!((landing_time_term(Vec3::new(0.1, 0.0, 0.3), -4.0, Vec2::new(0.5, 0.0)) - 0.2).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn aa_symmetry(a in vec3(4.0), b in vec3(4.0), s in 0.1f64..2.0) {
        prop_assert_eq!(eval_aa(a, b, s).unwrap(), eval_aa(b, a, s).unwrap());
        let p = SafetyParams { s_a: s, ..params() };
        let still = Some(Motion::Known(Vec3::ZERO));
        let ri = build_constraint_row(RowSpec::Aa { own: a, other: b, other_motion: still, other_id: None }, &p).unwrap();
        let rj = build_constraint_row(RowSpec::Aa { own: b, other: a, other_motion: still, other_id: None }, &p).unwrap();
        for (x, y) in ri.a.iter().zip(&rj.a) {
            prop_assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn spherical_boundary_is_zero(c in vec3(3.0), theta in 0.0..std::f64::consts::TAU, phi in 0.0..std::f64::consts::PI, s in 0.1f64..2.0) {
        // Axis-aligned separations are exact in floating point; general
        // directions agree to rounding.
        for axis in [Vec3::new(s, 0.0, 0.0), Vec3::new(0.0, s, 0.0), Vec3::new(0.0, 0.0, s)] {
            prop_assert_eq!(eval_aa(Vec3::ZERO + axis, Vec3::ZERO, s).unwrap(), 0.0);
        }
        prop_assert_eq!(eval_gg(Vec2::new(0.0, s), Vec2::ZERO, s).unwrap(), 0.0);
        let dir = Vec3::new(phi.sin() * theta.cos(), phi.sin() * theta.sin(), phi.cos());
        let h = eval_ago(c + dir * s, c, s).unwrap();
        prop_assert!(h.abs() < 1e-13 * (1.0 + c.norm_sq()), "h = {}", h);
    }

    #[test]
    fn gradients_match_central_differences(own in vec3(3.0), other in vec3(3.0), ugv in vec2(3.0), lift in 0.0f64..2.5) {
        let p = params();
        let still = Some(Motion::Known(Vec3::ZERO));
        let row = build_constraint_row(RowSpec::Aa { own, other, other_motion: still, other_id: None }, &p).unwrap();
        let fd = central_gradient(&own.to_array(), 1e-6, |x| eval_aa(Vec3::new(x[0], x[1], x[2]), other, p.s_a).unwrap());
        prop_assert!(relative_error(&row.a, &fd, 1e-2) < 1e-5);

        let near = p.platform(ugv) + Vec3::new(other.x / 2.0, other.y / 2.0, lift);
        let spec = RowSpec::Agc { own: near, ugv, ugv_motion: Some(Motion::Known(Vec2::ZERO)), other_id: None };
        let row = build_constraint_row(spec, &p).unwrap();
        let g = p.platform(ugv);
        let fd = central_gradient(&near.to_array(), 1e-6, |x| {
            eval_landing(Vec3::new(x[0], x[1], x[2]), g, p.alpha, p.beta, p.gamma).unwrap().h
        });
        prop_assert!(relative_error(&row.a, &fd, 1e-2) < 1e-5);
    }

    #[test]
    fn time_term_matches_moving_other(own in vec3(3.0), ugv in vec2(3.0), vel in vec2(0.6), lift in 0.0f64..2.5, dx in -1.5f64..1.5) {
        let p = params();
        let near = p.platform(ugv) + Vec3::new(dx, dx / 2.0, lift);
        let spec = RowSpec::Agc { own: near, ugv, ugv_motion: Some(Motion::Known(vel)), other_id: None };
        let row = build_constraint_row(spec, &p).unwrap();
        let h = |t: f64| eval_landing(near, p.platform(ugv + vel * t), p.alpha, p.beta, p.gamma).unwrap().h;
        let fd = (h(1e-6) - h(-1e-6)) / 2e-6;
        prop_assert!(relative_error(&[row.time_term(p.kappa)], &[fd], 1e-2) < 1e-4);

        let spec = RowSpec::Ago { own, ugv, ugv_motion: Some(Motion::Known(vel)), other_id: None };
        let row = build_constraint_row(spec, &p).unwrap();
        let h = |t: f64| eval_ago(own, p.platform(ugv + vel * t), p.s_ag).unwrap();
        let fd = (h(1e-6) - h(-1e-6)) / 2e-6;
        prop_assert!(relative_error(&[row.time_term(p.kappa)], &[fd], 1e-2) < 1e-4);
    }

    #[test]
    fn worst_case_time_term_is_a_lower_bound(own in vec3(3.0), other in vec3(3.0), dir in vec3(1.0)) {
        prop_assume!(dir.norm() > 1e-3);
        let p = params();
        let speed = p.v_bar * 3f64.sqrt();
        let v = dir * (speed / dir.norm());
        let known = build_constraint_row(RowSpec::Aa { own, other, other_motion: Some(Motion::Known(v)), other_id: None }, &p).unwrap();
        let worst = build_constraint_row(RowSpec::Aa { own, other, other_motion: Some(Motion::WorstCase { speed }), other_id: None }, &p).unwrap();
        prop_assert!(worst.b <= known.b + 1e-12);
    }

    #[test]
    fn funnel_surface_shape(alpha in 0.2f64..5.0, beta in 0.1f64..2.0, gamma in 0.0f64..0.5) {
        prop_assert_eq!(funnel_height(0.0, alpha, beta, gamma), gamma);
        let peak = funnel_height(1.0 / alpha, alpha, beta, gamma);
        prop_assert!((peak - (beta / std::f64::consts::E + gamma)).abs() < 1e-12);
        let mut prev = peak;
        for k in 1..=50 {
            let l = (1.0 + 0.2 * k as f64) / alpha;
            let h = funnel_height(l, alpha, beta, gamma);
            prop_assert!(h < prev);
            prop_assert!(h < peak);
            prev = h;
        }
        for k in 0..50 {
            let l = k as f64 / 50.0 / alpha;
            prop_assert!(funnel_height(l, alpha, beta, gamma) <= peak);
        }
    }

    #[test]
    fn box_rows_inside_are_valid(p in vec3(4.9)) {
        let params = params();
        let inside = Vec3::new(p.x, p.y, (p.z + 5.0) * 0.29);
        for face in BoxFace::UAV {
            let row = build_constraint_row(RowSpec::Box { point: BoxPoint::Uav(inside), face }, &params).unwrap();
            prop_assert_eq!(row.kind, RowKind::Box);
            prop_assert!(row.h_value >= 0.0);
            prop_assert_eq!(row.time_term(params.kappa), 0.0);
            prop_assert!(verify_validity(&row, params.v_bar));
        }
    }
}
