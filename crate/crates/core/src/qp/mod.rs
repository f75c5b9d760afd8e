//! Per-agent safety filter: the minimally invasive quadratic program
//!
//! ```text
//! min |u - u_nom|^2   s.t.  A u >= -b,   -v_lim <= u_k <= v_lim
//! ```
//!
//! The admissible box enters as ordinary halfspaces so that the projection is
//! taken jointly over barrier rows and input limits.

mod active_set;
pub mod oracle;

use serde::{Deserialize, Serialize};

use crate::cbf::ConstraintRow;
use active_set::{project, Halfspace, Outcome};

/// Weight on squared slacks in the relaxed problem.
pub const SLACK_WEIGHT: f64 = 1e4;

/// Feasibility tolerance used when reporting row satisfaction.
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QpError {
    #[error("row {row} has {found} gradient entries, expected {expected}")]
    DimensionMismatch { row: usize, expected: usize, found: usize },
    #[error("non-finite problem data")]
    NonFinite,
    #[error("box limit must be positive, got {0}")]
    BadBox(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub u_nominal: Vec<f64>,
    pub rows: Vec<ConstraintRow>,
    /// Per-axis input limit: `v_bar` for UAVs, `v_g` for UGVs.
    pub box_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QpStatus {
    Optimal,
    Relaxed,
    Failed,
}

impl QpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Relaxed => "relaxed",
            QpStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u_star: Vec<f64>,
    pub status: QpStatus,
    /// Largest row violation `max(0, -(a.u + b))`; the largest slack for a
    /// relaxed solution.
    pub max_violation: f64,
    pub iterations: usize,
    /// Per-row slacks of a relaxed solution; empty otherwise.
    pub slacks: Vec<f64>,
}

impl QpProblem {
    pub fn new(u_nominal: Vec<f64>, rows: Vec<ConstraintRow>, box_limit: f64) -> Self {
        Self { u_nominal, rows, box_limit }
    }

    pub fn dim(&self) -> usize {
        self.u_nominal.len()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.dim();
        if !(self.box_limit > 0.0) {
            return Err(QpError::BadBox(self.box_limit));
        }
        if !self.box_limit.is_finite() || self.u_nominal.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite);
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.a.len() != n {
                return Err(QpError::DimensionMismatch { row: i, expected: n, found: row.a.len() });
            }
            if !row.b.is_finite() || row.a.iter().any(|v| !v.is_finite()) {
                return Err(QpError::NonFinite);
            }
        }
        Ok(())
    }

    /// Barrier rows followed by the `2n` box faces, as `n . u >= c`.
    pub(crate) fn halfspaces(&self) -> Vec<Halfspace> {
        let n = self.dim();
        let mut out: Vec<Halfspace> =
            self.rows.iter().map(|r| Halfspace { normal: r.a.clone(), rhs: -r.b }).collect();
        for k in 0..n {
            for sign in [1.0, -1.0] {
                let mut normal = vec![0.0; n];
                normal[k] = sign;
                out.push(Halfspace { normal, rhs: -self.box_limit });
            }
        }
        out
    }

    pub fn objective(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.u_nominal).map(|(u, v)| (u - v) * (u - v)).sum()
    }

    /// Largest row violation at `u` (zero when all rows hold).
    pub fn max_row_violation(&self, u: &[f64]) -> f64 {
        self.rows.iter().map(|r| -r.residual(u)).fold(0.0, f64::max)
    }

    /// Largest violation over rows and box faces.
    pub fn max_violation_with_box(&self, u: &[f64]) -> f64 {
        let over = u.iter().map(|v| v.abs() - self.box_limit).fold(0.0, f64::max);
        self.max_row_violation(u).max(over)
    }

    pub fn within_box(&self, u: &[f64], tol: f64) -> bool {
        u.iter().all(|v| v.abs() <= self.box_limit + tol)
    }
}

/// Euclidean projection of the nominal input onto the feasible polytope.
///
/// An empty polytope yields `QpStatus::Failed`; callers escalate to
/// [`solve_relaxed`].
pub fn solve(problem: &QpProblem) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let proj = project(&problem.u_nominal, &problem.halfspaces());
    let status = match proj.outcome {
        Outcome::Optimal => QpStatus::Optimal,
        Outcome::Infeasible | Outcome::IterationLimit => QpStatus::Failed,
    };
    let max_violation = match status {
        QpStatus::Optimal => 0.0,
        _ => problem.max_violation_with_box(&proj.x),
    };
    Ok(QpSolution { u_star: proj.x, status, max_violation, iterations: proj.iterations, slacks: Vec::new() })
}

/// Slack-relaxed filter, always feasible:
///
/// ```text
/// min |u - u_nom|^2 + w sum s_i^2   s.t.  a_i.u >= -b_i - s_i,  s_i >= 0,  u in box
/// ```
///
/// Solved as a projection in the lifted space `(u, sqrt(w) s)`. When the
/// unrelaxed polytope is nonempty its projection is returned with zero slacks.
pub fn solve_relaxed(problem: &QpProblem) -> Result<QpSolution, QpError> {
    let exact = solve(problem)?;
    if exact.status == QpStatus::Optimal {
        let slacks = vec![0.0; problem.rows.len()];
        return Ok(QpSolution { status: QpStatus::Relaxed, slacks, ..exact });
    }
    let n = problem.dim();
    let m = problem.rows.len();
    let scale = SLACK_WEIGHT.sqrt();
    let dim = n + m;

    let mut cons = Vec::with_capacity(2 * m + 2 * n);
    for (i, row) in problem.rows.iter().enumerate() {
        let mut normal = vec![0.0; dim];
        normal[..n].copy_from_slice(&row.a);
        normal[n + i] = 1.0 / scale;
        cons.push(Halfspace { normal, rhs: -row.b });
    }
    for i in 0..m {
        let mut normal = vec![0.0; dim];
        normal[n + i] = 1.0;
        cons.push(Halfspace { normal, rhs: 0.0 });
    }
    for k in 0..n {
        for sign in [1.0, -1.0] {
            let mut normal = vec![0.0; dim];
            normal[k] = sign;
            cons.push(Halfspace { normal, rhs: -problem.box_limit });
        }
    }
    let mut x0 = problem.u_nominal.clone();
    x0.resize(dim, 0.0);

    let proj = project(&x0, &cons);
    let u_star = proj.x[..n].to_vec();
    let slacks: Vec<f64> = proj.x[n..].iter().map(|s| (s / scale).max(0.0)).collect();
    let status = match proj.outcome {
        Outcome::Optimal => QpStatus::Relaxed,
        _ => QpStatus::Failed,
    };
    let max_violation = match status {
        QpStatus::Relaxed => slacks.iter().copied().fold(0.0, f64::max),
        _ => problem.max_row_violation(&u_star),
    };
    Ok(QpSolution { u_star, status, max_violation, iterations: proj.iterations, slacks })
}

/// [`solve`], escalating to [`solve_relaxed`] when the polytope is empty.
pub fn solve_with_fallback(problem: &QpProblem) -> Result<QpSolution, QpError> {
    let sol = solve(problem)?;
    if sol.status == QpStatus::Optimal {
        return Ok(sol);
    }
    solve_relaxed(problem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cbf::RowKind;

    fn row(a: &[f64], b: f64) -> ConstraintRow {
        ConstraintRow { a: a.to_vec(), b, kind: RowKind::Box, other_id: None, h_value: b }
    }

    #[test]
    fn no_rows_interior_is_identity() {
        let p = QpProblem::new(vec![0.3, -0.2, 0.1], vec![], 1.0);
        let s = solve(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert_eq!(s.u_star, p.u_nominal);
        assert_eq!(s.max_violation, 0.0);
    }

    #[test]
    fn coordinate_halfspace() {
        let p = QpProblem::new(vec![-1.0, 0.0, 0.0], vec![row(&[1.0, 0.0, 0.0], 0.0)], 1.0);
        let s = solve(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert_eq!(s.u_star, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn nominal_outside_box_is_clipped() {
        let p = QpProblem::new(vec![3.0, -0.5], vec![], 1.0);
        assert_eq!(solve(&p).unwrap().u_star, vec![1.0, -0.5]);
    }

    #[test]
    fn infeasible_reports_failed() {
        let p = QpProblem::new(vec![0.0, 0.0, 0.0], vec![row(&[1.0, 0.0, 0.0], -2.0)], 1.0);
        let s = solve(&p).unwrap();
        assert_eq!(s.status, QpStatus::Failed);
        assert!(s.max_violation > 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let p = QpProblem::new(vec![0.0, 0.0], vec![row(&[1.0, 0.0, 0.0], 0.0)], 1.0);
        assert_eq!(solve(&p), Err(QpError::DimensionMismatch { row: 0, expected: 2, found: 3 }));
        let p = QpProblem::new(vec![f64::NAN, 0.0], vec![], 1.0);
        assert_eq!(solve(&p), Err(QpError::NonFinite));
        let p = QpProblem::new(vec![0.0], vec![], 0.0);
        assert_eq!(solve(&p), Err(QpError::BadBox(0.0)));
    }

    #[test]
    fn relaxed_box_conflict() {
        // u_x >= 2 against |u_x| <= 1.
        let p = QpProblem::new(vec![0.0, 0.0, 0.0], vec![row(&[1.0, 0.0, 0.0], -2.0)], 1.0);
        let s = solve_relaxed(&p).unwrap();
        assert_eq!(s.status, QpStatus::Relaxed);
        assert!((s.u_star[0] - 1.0).abs() < 1e-12);
        assert!((s.max_violation - 1.0).abs() < 1e-9);
    }

    #[test]
    fn relaxed_conflicting_rows_split_evenly() {
        let p = QpProblem::new(vec![0.0, 0.0], vec![row(&[1.0, 0.0], -1.0), row(&[-1.0, 0.0], -1.0)], 2.0);
        let s = solve_relaxed(&p).unwrap();
        assert!(s.u_star[0].abs() < 1e-9);
        assert!((s.slacks[0] - s.slacks[1]).abs() < 1e-9);
        assert!((s.slacks[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn relaxed_on_feasible_matches_solve() {
        let p = QpProblem::new(vec![-1.0, 0.4], vec![row(&[1.0, 1.0], 0.2)], 1.0);
        let exact = solve(&p).unwrap();
        let relaxed = solve_relaxed(&p).unwrap();
        assert_eq!(relaxed.max_violation, 0.0);
        assert_eq!(relaxed.slacks, vec![0.0]);
        for (a, b) in exact.u_star.iter().zip(&relaxed.u_star) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fallback_escalates() {
        let p = QpProblem::new(vec![0.0], vec![row(&[1.0], -1.0), row(&[-1.0], -1.0)], 1.0);
        assert_eq!(solve_with_fallback(&p).unwrap().status, QpStatus::Relaxed);
    }
}
