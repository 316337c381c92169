mod common;

use occurelax::lp::{enumerate_vertices_oracle, export_mps, parse_mps, solve_lp, LpStatus, OracleVerdict, SolveOptions};
use proptest::prelude::*;

fn agree(seed: u64) {
    let lp = common::random_lp(seed, 8, 6);
    let s = solve_lp(&lp, &SolveOptions::default()).unwrap();
    let o = enumerate_vertices_oracle(&lp).unwrap();
    match o {
        OracleVerdict::Optimal(v) => {
            assert_eq!(s.status, LpStatus::Optimal, "seed {seed}: oracle optimal {v}");
            assert!((s.objective - v).abs() <= 1e-8 * (1.0 + v.abs()), "seed {seed}: {} vs {v}", s.objective);
            assert!(s.primal_residual <= 1e-7 * (1.0 + lp.rhs_norm()), "seed {seed}");
            assert!(s.dual_objective <= s.objective + 1e-6, "seed {seed}");
            assert!(s.complementarity <= 1e-6 * (1.0 + s.objective.abs()), "seed {seed}");
        }
        OracleVerdict::Infeasible => assert_eq!(s.status, LpStatus::Infeasible, "seed {seed}"),
        OracleVerdict::Unbounded => assert_eq!(s.status, LpStatus::Unbounded, "seed {seed}"),
    }
}

#[test]
fn simplex_matches_vertex_oracle_on_many_seeds() {
    for seed in 0..600 {
        agree(seed);
    }
}

proptest! {
    #[test]
    fn mps_round_trip_is_byte_identical(seed in 0u64..10_000) {
        let lp = common::random_lp(seed, 8, 6);
        let text = export_mps(&lp);
        let back = parse_mps(&text).unwrap();
        prop_assert_eq!(&back, &lp);
        prop_assert_eq!(export_mps(&back), text);
    }
}
