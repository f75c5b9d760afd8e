//! Exhaustive reference solver for small filter problems.
//!
//! The projection of a point onto a polytope is the projection onto the
//! affine hull of some linearly independent subset of its active faces, so
//! enumerating every subset of at most `n` constraints, projecting onto each
//! affine subspace and keeping the closest feasible candidate gives the exact
//! answer. Cost is exponential in the constraint count; intended for tests
//! and for problems with roughly 16 rows or fewer.

use nalgebra::{DMatrix, DVector};

use super::{QpProblem, QpSolution, QpStatus, SLACK_WEIGHT};

const FEAS: f64 = 1e-9;

/// `normals[j] . x >= rhs[j]`.
fn enumerate(x0: &[f64], normals: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = x0.len();
    let m = normals.len();
    let x0v = DVector::from_column_slice(x0);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut subset: Vec<usize> = Vec::with_capacity(n);

    fn visit(
        start: usize,
        subset: &mut Vec<usize>,
        n: usize,
        m: usize,
        f: &mut dyn FnMut(&[usize]),
    ) {
        f(subset);
        if subset.len() == n {
            return;
        }
        for j in start..m {
            subset.push(j);
            visit(j + 1, subset, n, m, f);
            subset.pop();
        }
    }

    let mut check = |set: &[usize]| {
        let x = if set.is_empty() {
            x0v.clone()
        } else {
            let q = set.len();
            let nmat = DMatrix::from_fn(n, q, |i, k| normals[set[k]][i]);
            let gram = nmat.transpose() * &nmat;
            let svd = gram.clone().svd(false, false);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            if smax == 0.0 || smin <= 1e-12 * smax {
                return;
            }
            let target = DVector::from_fn(q, |k, _| rhs[set[k]]) - nmat.transpose() * &x0v;
            let Some(mu) = gram.lu().solve(&target) else { return };
            &x0v + &nmat * mu
        };
        let feasible = (0..m).all(|j| {
            let s: f64 = normals[j].iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() - rhs[j];
            let scale = 1.0 + rhs[j].abs();
            s >= -FEAS * scale
        });
        if !feasible {
            return;
        }
        let obj = (&x - &x0v).norm_squared();
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, x.iter().copied().collect()));
        }
    };
    visit(0, &mut subset, n, m, &mut check);
    best.map(|(_, x)| x)
}

fn box_faces(n: usize, dim: usize, limit: f64, normals: &mut Vec<Vec<f64>>, rhs: &mut Vec<f64>) {
    for k in 0..n {
        for sign in [1.0, -1.0] {
            let mut a = vec![0.0; dim];
            a[k] = sign;
            normals.push(a);
            rhs.push(-limit);
        }
    }
}

/// Exact filter solution by active-set enumeration.
pub fn oracle_solve(problem: &QpProblem) -> QpSolution {
    let n = problem.u_nominal.len();
    let mut normals: Vec<Vec<f64>> = problem.rows.iter().map(|r| r.a.clone()).collect();
    let mut rhs: Vec<f64> = problem.rows.iter().map(|r| -r.b).collect();
    box_faces(n, n, problem.box_limit, &mut normals, &mut rhs);
    match enumerate(&problem.u_nominal, &normals, &rhs) {
        Some(u) => QpSolution { u_star: u, status: QpStatus::Optimal, max_violation: 0.0, iterations: 0, slacks: vec![] },
        None => QpSolution {
            u_star: problem.u_nominal.clone(),
            status: QpStatus::Failed,
            max_violation: problem.max_row_violation(&problem.u_nominal),
            iterations: 0,
            slacks: vec![],
        },
    }
}

/// Enumeration on the lifted slack problem solved by
/// [`solve_relaxed`](super::solve_relaxed).
pub fn oracle_solve_relaxed(problem: &QpProblem) -> QpSolution {
    let n = problem.u_nominal.len();
    let m = problem.rows.len();
    let dim = n + m;
    let scale = SLACK_WEIGHT.sqrt();
    let mut normals = Vec::new();
    let mut rhs = Vec::new();
    for (i, r) in problem.rows.iter().enumerate() {
        let mut a = vec![0.0; dim];
        a[..n].copy_from_slice(&r.a);
        a[n + i] = 1.0 / scale;
        normals.push(a);
        rhs.push(-r.b);
    }
    for i in 0..m {
        let mut a = vec![0.0; dim];
        a[n + i] = 1.0;
        normals.push(a);
        rhs.push(0.0);
    }
    box_faces(n, dim, problem.box_limit, &mut normals, &mut rhs);
    let mut x0 = problem.u_nominal.clone();
    x0.resize(dim, 0.0);
    let x = enumerate(&x0, &normals, &rhs).expect("lifted problem is always feasible");
    let slacks: Vec<f64> = x[n..].iter().map(|s| (s / scale).max(0.0)).collect();
    QpSolution {
        u_star: x[..n].to_vec(),
        status: QpStatus::Relaxed,
        max_violation: slacks.iter().copied().fold(0.0, f64::max),
        iterations: 0,
        slacks,
    }
}
