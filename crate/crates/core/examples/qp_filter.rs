//! Filter a nominal velocity that would drive straight into another UAV.

use fleet_cbf::cbf::{build_constraint_row, Motion, RowSpec, SafetyParams};
use fleet_cbf::geometry::Vec3;
use fleet_cbf::qp::{solve_with_fallback, QpProblem};

fn main() {
    let p = SafetyParams::default();
    let own = Vec3::new(0.0, 0.0, 1.0);
    let other = Vec3::new(0.6, 0.05, 1.0);
    let row = build_constraint_row(
        RowSpec::Aa { own, other, other_motion: Some(Motion::Known(Vec3::ZERO)), other_id: None },
        &p,
    )
    .unwrap();
    let nominal = vec![1.0, 0.0, 0.0];
    let problem = QpProblem::new(nominal.clone(), vec![row.clone()], p.v_bar);
    let s = solve_with_fallback(&problem).unwrap();
    println!("h          = {:.4}", row.h_value);
    println!("nominal    = {nominal:?}");
    println!("filtered   = {:?} ({:?}, {} iterations)", s.u_star, s.status, s.iterations);
    println!("row margin = {:.2e}", row.residual(&s.u_star));
}
