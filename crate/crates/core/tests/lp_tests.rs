//! The simplex solver against a basic-feasible-solution enumeration oracle,
//! plus the dual-side guarantees the rest of the library leans on.

mod common;

use common::{random_box_lp, rng, RawLp};
use otskit::lp::LpStatus;
use otskit::SolverOptions;
use proptest::prelude::*;

#[test]
fn agrees_with_vertex_enumeration_on_random_boxes() {
    let mut r = rng(0x5ea7);
    for trial in 0..100 {
        // Roughly one in four instances carries a row no point can satisfy.
        let raw = random_box_lp(&mut r, trial % 4 == 3);
        let sol = raw.problem().solve(&SolverOptions::default()).unwrap();
        let oracle = raw.best_vertex();
        match (&sol.status, oracle) {
            (LpStatus::Optimal, Some(z)) => {
                assert!(
                    (sol.objective - z).abs() <= 1e-7 * (1.0 + z.abs()),
                    "trial {trial}: solver {} vs oracle {z}",
                    sol.objective
                );
                assert!(raw.is_feasible(&sol.x, 1e-7), "trial {trial}: returned point violates");
            }
            (LpStatus::Infeasible, None) => {}
            (status, oracle) => {
                panic!("trial {trial}: solver says {status:?}, oracle says {oracle:?}")
            }
        }
    }
}

#[test]
fn kkt_conditions_hold_at_reported_optima() {
    let mut r = rng(0x2b1);
    for _ in 0..40 {
        let raw = random_box_lp(&mut r, false);
        let p = raw.problem();
        let sol = p.solve(&SolverOptions::default()).unwrap();
        assert!(matches!(sol.status, LpStatus::Optimal));
        let kkt = p.check_kkt(&sol);
        assert!(kkt.max_primal_violation <= 1e-7, "primal {kkt:?}");
        assert!(kkt.max_dual_violation <= 1e-6, "dual {kkt:?}");
        assert!(kkt.duality_gap <= 1e-6, "gap {kkt:?}");
    }
}

#[test]
fn duality_gap_is_reported_tight() {
    let mut r = rng(77);
    for _ in 0..40 {
        let raw = random_box_lp(&mut r, false);
        let sol = raw.problem().solve(&SolverOptions::default()).unwrap();
        assert!(sol.residuals.gap <= 1e-6, "reported gap {}", sol.residuals.gap);
        assert!(sol.residuals.primal <= 1e-7);
        assert!(sol.residuals.dual <= 1e-6);
    }
}

#[test]
fn fixed_variables_and_zero_objectives_are_handled() {
    // One variable pinned by an equal-bounds box, zero cost vector: any
    // vertex is optimal and the pinned coordinate must come back exactly.
    let raw = RawLp {
        c: vec![0.0, 0.0],
        lower: vec![1.25, -1.0],
        upper: vec![1.25, 2.0],
        eq: vec![],
        ge: vec![(vec![1.0, 1.0], 1.0)],
    };
    let sol = raw.problem().solve(&SolverOptions::default()).unwrap();
    assert!(matches!(sol.status, LpStatus::Optimal));
    assert_eq!(sol.objective, 0.0);
    assert!((sol.x[0] - 1.25).abs() <= 1e-9);
    assert!(raw.is_feasible(&sol.x, 1e-9));
}

#[test]
fn equality_square_system_is_solved_exactly() {
    // Two equations, two unknowns: the LP has a single feasible point.
    let raw = RawLp {
        c: vec![3.0, -1.0],
        lower: vec![-10.0, -10.0],
        upper: vec![10.0, 10.0],
        eq: vec![(vec![1.0, 1.0], 3.0), (vec![1.0, -1.0], 1.0)],
        ge: vec![],
    };
    let sol = raw.problem().solve(&SolverOptions::default()).unwrap();
    assert!(matches!(sol.status, LpStatus::Optimal));
    assert!((sol.x[0] - 2.0).abs() <= 1e-9 && (sol.x[1] - 1.0).abs() <= 1e-9);
    assert!((sol.objective - 5.0).abs() <= 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// No feasible vertex the oracle can construct beats the reported
    /// optimum, and the reported point itself satisfies every constraint.
    #[test]
    fn prop_reported_optimum_is_unbeaten(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let raw = random_box_lp(&mut r, false);
        let sol = raw.problem().solve(&SolverOptions::default()).unwrap();
        prop_assert!(matches!(sol.status, LpStatus::Optimal));
        prop_assert!(raw.is_feasible(&sol.x, 1e-7));
        if let Some(z) = raw.best_vertex() {
            prop_assert!(sol.objective <= z + 1e-7 * (1.0 + z.abs()));
        }
    }

    /// Scaling the objective vector scales the optimal value, pivot-path
    /// details notwithstanding.
    #[test]
    fn prop_objective_scaling(seed in 0u64..10_000, scale in 0.1f64..10.0) {
        let mut r = rng(seed);
        let raw = random_box_lp(&mut r, false);
        let base = raw.problem().solve(&SolverOptions::default()).unwrap();
        let mut scaled = raw.clone();
        for cj in &mut scaled.c {
            *cj *= scale;
        }
        let sol = scaled.problem().solve(&SolverOptions::default()).unwrap();
        prop_assert!(
            (sol.objective - scale * base.objective).abs()
                <= 1e-6 * (1.0 + sol.objective.abs())
        );
    }
}
