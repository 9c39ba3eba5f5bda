mod common;

use common::ipm;
use common::lpgen::{beale, marshall_suurballe, random_lp};
use neural_rld::lpsolve::{solve_lp, LpStatus};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn random_lps_match_interior_point_oracle() {
    for seed in 0..50 {
        let lp = random_lp(20, 10, seed);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal, "seed {seed}");
        let oracle = ipm::solve_general(&lp);
        assert!(oracle.converged, "oracle failed on seed {seed}");
        let rel = (sol.objective - oracle.objective).abs() / (1.0 + oracle.objective.abs());
        assert!(rel < 1e-6, "seed {seed}: simplex {} vs ipm {}", sol.objective, oracle.objective);
    }
}

#[test]
fn beale_terminates() {
    let sol = solve_lp(&beale()).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!((sol.objective + 0.05).abs() < 1e-10);
}

#[test]
fn marshall_suurballe_terminates() {
    let lp = marshall_suurballe();
    let sol = solve_lp(&lp).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!((sol.objective + 2.0).abs() < 1e-9, "{}", sol.objective);
}

#[test]
fn bounded_and_free_variables_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in 0..20 {
        let mut lp = random_lp(12, 6, 1000 + seed);
        for j in 0..12 {
            match rng.random_range(0..3) {
                0 => lp.upper[j] = rng.random_range(0.5..3.0),
                1 => {
                    lp.lower[j] = f64::NEG_INFINITY;
                    lp.upper[j] = rng.random_range(1.0..3.0);
                }
                _ => {}
            }
        }
        let sol = solve_lp(&lp).unwrap();
        let oracle = ipm::solve_general(&lp);
        match sol.status {
            LpStatus::Optimal => {
                assert!(oracle.converged);
                let rel = (sol.objective - oracle.objective).abs() / (1.0 + oracle.objective.abs());
                assert!(rel < 1e-6, "seed {seed}: {} vs {}", sol.objective, oracle.objective);
            }
            other => assert!(!oracle.converged, "seed {seed}: simplex {other:?} but oracle converged"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimal_solutions_certify_themselves(seed in 0u64..10_000, n in 4usize..16, m in 1usize..4) {
        let lp = random_lp(n, m.min(n - 1), seed);
        let sol = solve_lp(&lp).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        prop_assert!(sol.duality_gap() <= 1e-7 * (1.0 + sol.objective.abs()));
        for j in 0..n {
            let z = sol.z[j];
            prop_assert!(z >= -1e-8);
            // x >= 0 only: reduced costs nonnegative and complementary.
            prop_assert!(sol.reduced_costs[j] >= -1e-7);
            prop_assert!((sol.reduced_costs[j] * z).abs() <= 1e-7);
        }
        for i in 0..lp.n_rows() {
            let ax: f64 = (0..n).map(|j| lp.a_eq[(i, j)] * sol.z[j]).sum();
            prop_assert!((ax - lp.b_eq[i]).abs() <= 1e-8 * (1.0 + lp.b_eq[i].abs()));
        }
        let again = solve_lp(&lp).unwrap();
        prop_assert_eq!(sol, again);
    }
}
