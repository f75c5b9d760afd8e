//! Build one row of each barrier family and print its linear constraint.

use fleet_cbf::cbf::{build_constraint_row, BoxFace, BoxPoint, Motion, RowSpec, SafetyParams};
use fleet_cbf::geometry::{Vec2, Vec3};

fn main() {
    let p = SafetyParams::default();
    let uav = Vec3::new(0.4, 0.1, 1.0);
    let specs = [
        RowSpec::Aa { own: uav, other: Vec3::new(1.2, 0.0, 1.1), other_motion: Some(Motion::Known(Vec3::new(-0.5, 0.0, 0.0))), other_id: None },
        RowSpec::Gg { own: Vec2::new(0.0, 0.0), other: Vec2::new(1.5, 0.3), other_motion: Some(Motion::WorstCase { speed: p.v_g * 2f64.sqrt() }), other_id: None },
        RowSpec::Ago { own: uav, ugv: Vec2::new(1.0, 0.5), ugv_motion: Some(Motion::Known(Vec2::new(0.3, 0.0))), other_id: None },
        RowSpec::Agc { own: uav, ugv: Vec2::new(0.0, 0.0), ugv_motion: Some(Motion::Known(Vec2::new(0.3, 0.0))), other_id: None },
        RowSpec::Box { point: BoxPoint::Uav(uav), face: BoxFace::ZMax },
    ];
    for spec in specs {
        let row = build_constraint_row(spec, &p).expect("finite inputs");
        println!("{:>4}  h = {:8.4}  a = {:?}  b = {:8.4}  (a.u >= -b)", row.kind.to_string(), row.h_value, row.a, row.b);
    }
}
