//! Time-varying control barrier function safety filtering for coupled
//! UAV/UGV fleets coordinated by a central Watcher over a simulated network.

// Validation uses `!(x > 0.0)` style checks on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod cbf;
pub mod geometry;
pub mod ids;
pub mod netsim;
pub mod qp;
pub mod scenario;
pub mod task;
pub mod watcher;
