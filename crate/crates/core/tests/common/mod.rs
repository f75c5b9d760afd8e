#![allow(dead_code)]

use fleet_cbf::cbf::{ConstraintRow, RowKind, SafetyParams};
use fleet_cbf::qp::QpProblem;
use rand::Rng;

/// Allowed barrier dip for a family: `max(1e-3, 0.01 * radius)`.
pub fn tolerance(kind: RowKind, params: &SafetyParams) -> f64 {
    let radius = match kind {
        RowKind::Aa => params.s_a,
        RowKind::Gg => params.s_g,
        RowKind::Ago => params.s_ag,
        RowKind::Agc | RowKind::Box => 0.0,
    };
    f64::max(1e-3, 0.01 * radius)
}

pub fn row(a: Vec<f64>, b: f64) -> ConstraintRow {
    ConstraintRow { a, b, kind: RowKind::Box, other_id: None, h_value: 0.0 }
}

/// Random problem in 2 or 3 dimensions with 0-12 rows. Roughly half of the
/// instances with many rows are infeasible.
pub fn random_qp(rng: &mut impl Rng) -> QpProblem {
    let n = if rng.random_bool(0.5) { 2 } else { 3 };
    let m = rng.random_range(0..=12);
    let box_limit = rng.random_range(0.3..2.0);
    let rows = (0..m)
        .map(|_| {
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            row(a, rng.random_range(-1.5..1.0))
        })
        .collect();
    let nominal = (0..n).map(|_| rng.random_range(-2.5..2.5)).collect();
    QpProblem::new(nominal, rows, box_limit)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Central difference of `f` along each coordinate of `x`.
pub fn central_gradient(x: &[f64], step: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut hi = x.to_vec();
            let mut lo = x.to_vec();
            hi[i] += step;
            lo[i] -= step;
            (f(&hi) - f(&lo)) / (2.0 * step)
        })
        .collect()
}

/// `|got - want|_inf / max(|want|_inf, floor)`.
pub fn relative_error(got: &[f64], want: &[f64], floor: f64) -> f64 {
    let scale = want.iter().map(|v| v.abs()).fold(floor, f64::max);
    max_abs_diff(got, want) / scale
}
