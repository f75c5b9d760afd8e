//! Dual active-set method (Goldfarb-Idnani) specialised to an identity
//! Hessian: project `x0` onto `{x : n_j . x >= c_j}`.
//!
//! The method starts from the unconstrained minimizer, repeatedly picks the
//! most violated constraint and moves along the null space of the working
//! set while keeping the multipliers dual feasible. It terminates after a
//! finite number of steps with either the projection or a certificate that
//! the constraint set is empty.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub(crate) struct Halfspace {
    pub normal: Vec<f64>,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Outcome {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub(crate) struct Projection {
    pub x: Vec<f64>,
    pub outcome: Outcome,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// Scaled violation tolerance of one halfspace at `x`.
fn tolerance(h: &Halfspace, x: &[f64]) -> f64 {
    let nn = dot(&h.normal, &h.normal).sqrt();
    let xn = dot(x, x).sqrt();
    1e-12 * (1.0 + h.rhs.abs() + nn * xn)
}

pub(crate) fn project(x0: &[f64], cons: &[Halfspace]) -> Projection {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut active: Vec<usize> = Vec::with_capacity(n);
    let mut lambda: Vec<f64> = Vec::with_capacity(n);
    let mut iterations = 0usize;
    let max_iter = 10 * (cons.len() + n) + 50;

    // Rows with a vanishing normal are constant; decide them up front.
    for h in cons {
        if dot(&h.normal, &h.normal) == 0.0 && h.rhs > tolerance(h, &x) {
            return Projection { x, outcome: Outcome::Infeasible, iterations };
        }
    }

    loop {
        // Most violated constraint, measured in distance.
        let mut pick: Option<(usize, f64)> = None;
        for (j, h) in cons.iter().enumerate() {
            if active.contains(&j) {
                continue;
            }
            let nn = dot(&h.normal, &h.normal);
            if nn == 0.0 {
                continue;
            }
            let s = dot(&h.normal, &x) - h.rhs;
            if s < -tolerance(h, &x) {
                let d = s / nn.sqrt();
                if pick.is_none_or(|(_, best)| d < best) {
                    pick = Some((j, d));
                }
            }
        }
        let Some((p, _)) = pick else {
            // Working-set rows are only satisfied up to rounding; confirm.
            let outcome = if cons.iter().all(|h| dot(&h.normal, &x) - h.rhs >= -1e3 * tolerance(h, &x)) {
                Outcome::Optimal
            } else {
                Outcome::IterationLimit
            };
            return Projection { x, outcome, iterations };
        };
        let np = &cons[p].normal;
        let np_norm = dot(np, np).sqrt();
        let mut lambda_p = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Projection { x, outcome: Outcome::IterationLimit, iterations };
            }
            let q = active.len();
            // r = (N^T N)^-1 N^T n_p, z = n_p - N r.
            let (r, z) = if q == 0 {
                (Vec::new(), np.clone())
            } else {
                let nmat = DMatrix::from_fn(n, q, |i, k| cons[active[k]].normal[i]);
                let gram = nmat.transpose() * &nmat;
                let rhs = nmat.transpose() * DVector::from_column_slice(np);
                let r = match gram.clone().cholesky() {
                    Some(ch) => ch.solve(&rhs),
                    None => match gram.lu().solve(&rhs) {
                        Some(r) => r,
                        None => return Projection { x, outcome: Outcome::IterationLimit, iterations },
                    },
                };
                let z = DVector::from_column_slice(np) - &nmat * &r;
                (r.iter().copied().collect(), z.iter().copied().collect::<Vec<_>>())
            };
            let z_norm = dot(&z, &z).sqrt();
            // A working set of n independent rows leaves no null space, however
            // badly conditioned; rounding must not open one.
            let z_zero = q >= n || z_norm <= 1e-12 * np_norm;

            // Largest dual step keeping the working-set multipliers >= 0.
            let mut t1 = f64::INFINITY;
            let mut drop_at = None;
            for (k, &rk) in r.iter().enumerate() {
                if rk > 0.0 {
                    let t = lambda[k] / rk;
                    if t < t1 {
                        t1 = t;
                        drop_at = Some(k);
                    }
                }
            }

            if z_zero {
                let Some(k) = drop_at else {
                    return Projection { x, outcome: Outcome::Infeasible, iterations };
                };
                for (lk, rk) in lambda.iter_mut().zip(&r) {
                    *lk -= t1 * rk;
                }
                lambda_p += t1;
                active.remove(k);
                lambda.remove(k);
                continue;
            }

            let s_p = dot(np, &x) - cons[p].rhs;
            let t2 = -s_p / dot(&z, np);
            let t = t1.min(t2);
            for (xi, zi) in x.iter_mut().zip(&z) {
                *xi += t * zi;
            }
            for (lk, rk) in lambda.iter_mut().zip(&r) {
                *lk -= t * rk;
            }
            lambda_p += t;
            if t2 <= t1 {
                active.push(p);
                lambda.push(lambda_p);
                break;
            }
            let k = drop_at.expect("finite t1 implies a blocking constraint");
            active.remove(k);
            lambda.remove(k);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hs(normal: &[f64], rhs: f64) -> Halfspace {
        Halfspace { normal: normal.to_vec(), rhs }
    }

    #[test]
    fn single_halfspace_projection() {
        let p = project(&[-1.0, 0.5], &[hs(&[1.0, 1.0], 1.0)]);
        assert_eq!(p.outcome, Outcome::Optimal);
        // Closed form: x0 + (c - n.x0)/|n|^2 n = (-1, .5) + 0.75 (1, 1).
        assert!((p.x[0] + 0.25).abs() < 1e-14);
        assert!((p.x[1] - 1.25).abs() < 1e-14);
    }

    #[test]
    fn corner_projection() {
        let cons = [hs(&[1.0, 0.0], 1.0), hs(&[0.0, 1.0], 1.0)];
        let p = project(&[0.0, 0.0], &cons);
        assert_eq!(p.outcome, Outcome::Optimal);
        assert_eq!(p.x, vec![1.0, 1.0]);
    }

    #[test]
    fn detects_empty_set() {
        let cons = [hs(&[1.0], 2.0), hs(&[-1.0], -1.0)];
        assert_eq!(project(&[0.0], &cons).outcome, Outcome::Infeasible);
        assert_eq!(project(&[0.0, 0.0], &[hs(&[0.0, 0.0], 0.1)]).outcome, Outcome::Infeasible);
    }

    #[test]
    fn redundant_parallel_constraints() {
        let cons = [hs(&[1.0, 0.0], 1.0), hs(&[2.0, 0.0], 2.0), hs(&[1.0, 0.0], 0.5)];
        let p = project(&[0.0, 3.0], &cons);
        assert_eq!(p.outcome, Outcome::Optimal);
        assert!((p.x[0] - 1.0).abs() < 1e-14 && (p.x[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn nearly_antiparallel_slab_is_empty() {
        // The two slab rows meet far outside the box, so the set is empty; the
        // ill-conditioned working set must not grow past the dimension.
        let cons = [
            hs(&[1.5874307516641686, 1.9382565970443046], -0.06970663815956302),
            hs(&[-0.9488569628784216, -1.1492014881754269], 0.6460656992657857),
            hs(&[1.0, 0.0], -0.7407668864806751),
            hs(&[-1.0, 0.0], -0.7407668864806751),
            hs(&[0.0, 1.0], -0.7407668864806751),
            hs(&[0.0, -1.0], -0.7407668864806751),
        ];
        let p = project(&[1.6405318568479865, -1.0444785050625849], &cons);
        assert_ne!(p.outcome, Outcome::Optimal);
    }
}
