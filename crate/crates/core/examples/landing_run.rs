//! Land a UAV on its moving UGV, stepping the simulation by hand to print
//! the descent.

use fleet_cbf::agent::UavMode;
use fleet_cbf::ids::AgentId;
use fleet_cbf::scenario::generate::landing;
use fleet_cbf::scenario::{RunOptions, Simulation};

fn main() {
    let cfg = landing(3);
    let signal = cfg.landing[0].time;
    let mut sim = Simulation::new(&cfg, RunOptions::default());
    let mut mode = UavMode::Task;
    let mut last_print = f64::NEG_INFINITY;
    while !sim.is_finished() {
        sim.step();
        let now = sim.unit(AgentId::uav(0)).map(|u| u.mode()).unwrap_or(mode);
        let t = sim.time();
        if now != mode || (t >= signal && t - last_print >= 1.0 && mode == UavMode::ReturnAndLand) {
            let p = sim.uav_position(0);
            let g = sim.ugv_state(0);
            println!("t = {t:6.2}  {now:?}  uav = ({:.2}, {:.2}, {:.3})  ugv = ({:.2}, {:.2})", p.x, p.y, p.z, g.x, g.y);
            mode = now;
            last_print = t;
        }
        if mode == UavMode::Landed {
            break;
        }
    }
    match sim.watcher().touchdown_time(0) {
        Some(t) => println!("touchdown confirmed at {t:.2} s ({:.2} s after the signal)", t - signal),
        None => println!("no touchdown"),
    }
}
