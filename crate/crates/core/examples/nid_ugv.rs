//! Drive a UGV's offset point along a square through the near-identity
//! diffeomorphism, reporting wheel speeds and tracking error.

use fleet_cbf::agent::{nid_inverse, nid_offset, step_ugv, wheel_speeds, UgvState};
use fleet_cbf::geometry::Vec2;

fn main() {
    let mut g = UgvState { x: 0.0, y: 0.0, theta: 0.3, offset: 0.1, wheel_base: 0.2 };
    let corners = [Vec2::new(2.0, 0.0), Vec2::new(2.0, 2.0), Vec2::new(0.0, 2.0), Vec2::new(0.0, 0.0)];
    let dt = 0.01;
    let mut t = 0.0;
    for target in corners {
        while (target - nid_offset(&g)).norm() > 0.02 {
            let e = target - nid_offset(&g);
            let want = e * (0.6 / e.norm().max(0.6));
            let tw = nid_inverse(&g, want, 2.0);
            g = step_ugv(&g, tw.v, tw.omega, dt);
            t += dt;
        }
        let (r1, r2) = wheel_speeds(0.6, 0.0, g.wheel_base);
        let rho = nid_offset(&g);
        println!("t = {t:6.2}  offset = ({:.3}, {:.3})  heading = {:.3}  cruise wheels = ({r1:.2}, {r2:.2})", rho.x, rho.y, g.theta);
    }
}
