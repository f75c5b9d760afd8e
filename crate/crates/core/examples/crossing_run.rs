//! Generate a seeded crossing scenario, run it and print the safety summary.
//!
//! `cargo run --release --example crossing_run -- [seed] [pairs]`

use fleet_cbf::scenario::generate::crossing;
use fleet_cbf::scenario::{run, RunOptions};

fn main() {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let n = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);
    let cfg = crossing(seed, n, 30.0);
    let out = run(&cfg, RunOptions::default());
    if let Some(a) = &out.abort {
        println!("aborted at {}: {}", a.t, a.reason);
    }
    let s = &out.summary;
    for (family, h) in &s.min_h {
        println!("min h {family:>4} = {h:.4}");
    }
    for (pair, d) in &s.min_distance {
        println!("min distance {pair} = {d:.3}");
    }
    println!("qp status counts {:?}", s.qp_status);
}
