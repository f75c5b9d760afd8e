mod common;

use fleet_cbf::qp::oracle::{oracle_solve, oracle_solve_relaxed};
use fleet_cbf::qp::{solve, solve_relaxed, solve_with_fallback, QpProblem, QpStatus};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{max_abs_diff, random_qp, row};

fn problem() -> impl Strategy<Value = QpProblem> {
    any::<u64>().prop_map(|seed| random_qp(&mut ChaCha8Rng::seed_from_u64(seed)))
}

#[test]
fn oracle_closed_form_single_row() {
    // u_star = u_nom + ((-b - a.u_nom) / |a|^2) a when the row is violated.
    let a = vec![0.6, -0.8, 0.0];
    let nominal = vec![-0.5, 0.5, 0.1];
    let b = 0.2;
    let p = QpProblem::new(nominal.clone(), vec![row(a.clone(), b)], 10.0);
    let dot: f64 = a.iter().zip(&nominal).map(|(x, y)| x * y).sum();
    let step = (-b - dot) / 1.0;
    let want: Vec<f64> = nominal.iter().zip(&a).map(|(u, a)| u + step * a).collect();
    let got = oracle_solve(&p);
    assert_eq!(got.status, QpStatus::Optimal);
    assert!(max_abs_diff(&got.u_star, &want) < 1e-14);
    assert!(max_abs_diff(&solve(&p).unwrap().u_star, &want) < 1e-14);
}

#[test]
fn oracle_detects_empty_box_intersection() {
    let p = QpProblem::new(vec![0.0, 0.0, 0.0], vec![row(vec![1.0, 0.0, 0.0], -2.0)], 1.0);
    assert_eq!(oracle_solve(&p).status, QpStatus::Failed);
    assert_eq!(solve(&p).unwrap().status, QpStatus::Failed);
}

#[test]
fn relaxed_box_conflict_matches_lifted_oracle() {
    let p = QpProblem::new(vec![0.0, 0.0, 0.0], vec![row(vec![1.0, 0.0, 0.0], -2.0)], 1.0);
    let got = solve_relaxed(&p).unwrap();
    let want = oracle_solve_relaxed(&p);
    assert_eq!(got.status, QpStatus::Relaxed);
    assert!((got.u_star[0] - 1.0).abs() < 1e-9);
    assert!((got.max_violation - 1.0).abs() < 1e-3);
    assert!(max_abs_diff(&got.u_star, &want.u_star) < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn matches_oracle(p in problem()) {
        let got = solve(&p).unwrap();
        let want = oracle_solve(&p);
        prop_assert_eq!(got.status == QpStatus::Failed, want.status == QpStatus::Failed);
        if want.status == QpStatus::Optimal {
            prop_assert!(max_abs_diff(&got.u_star, &want.u_star) <= 1e-5);
            prop_assert!((p.objective(&got.u_star) - p.objective(&want.u_star)).abs() <= 1e-8);
        }
    }

    #[test]
    fn optimal_solutions_satisfy_every_row(p in problem()) {
        let s = solve(&p).unwrap();
        if s.status == QpStatus::Optimal {
            for r in &p.rows {
                prop_assert!(r.residual(&s.u_star) >= -1e-9);
            }
            prop_assert!(p.within_box(&s.u_star, 1e-12));
        }
    }

    #[test]
    fn feasible_nominal_is_untouched(p in problem()) {
        let inside = p.u_nominal.iter().map(|u| u.clamp(-p.box_limit, p.box_limit)).collect::<Vec<_>>();
        let rows = p.rows.iter().filter(|r| r.residual(&inside) >= 0.0).cloned().collect();
        let q = QpProblem::new(inside.clone(), rows, p.box_limit);
        let s = solve(&q).unwrap();
        prop_assert_eq!(s.status, QpStatus::Optimal);
        prop_assert!(max_abs_diff(&s.u_star, &inside) <= 1e-9);
    }

    #[test]
    fn projection_is_idempotent(p in problem()) {
        let first = solve(&p).unwrap();
        prop_assume!(first.status == QpStatus::Optimal);
        let again = solve(&QpProblem::new(first.u_star.clone(), p.rows.clone(), p.box_limit)).unwrap();
        prop_assert_eq!(again.status, QpStatus::Optimal);
        prop_assert!(max_abs_diff(&again.u_star, &first.u_star) <= 1e-9);
    }

    #[test]
    fn solutions_are_bit_identical(p in problem()) {
        let a = solve_with_fallback(&p).unwrap();
        let b = solve_with_fallback(&p).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn fallback_never_fails_and_stays_in_box(p in problem()) {
        let s = solve_with_fallback(&p).unwrap();
        prop_assert!(s.status != QpStatus::Failed);
        prop_assert!(p.within_box(&s.u_star, 1e-9));
        if s.status == QpStatus::Relaxed {
            prop_assert_eq!(s.slacks.len(), p.rows.len());
            for (r, slack) in p.rows.iter().zip(&s.slacks) {
                prop_assert!(r.residual(&s.u_star) + slack >= -1e-7);
            }
        }
    }
}
