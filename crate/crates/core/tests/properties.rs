mod common;

use std::sync::Arc;

use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use stable_transport::transport::{check_balanced, check_stable, validate_constrained};
use stable_transport::voronoi::{voronoi_row, in_territory};
use stable_transport::{solve_site_optimal, Geometry, Measure32, Point, Provenance, SolveOptions};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, rng_seed: RngSeed::Fixed(7), failure_persistence: None, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn solver_invariants_on_generic_instances(seed in any::<u64>()) {
        let failures = common::check_generic(&common::generic_instance(seed));
        prop_assert!(failures.is_empty(), "{:#?}", failures);
    }

    #[test]
    fn optimality_and_monotonicity(seed in any::<u64>()) {
        let failures = common::check_order_properties(seed);
        prop_assert!(failures.is_empty(), "{:#?}", failures);
    }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn voronoi_rows_are_normalized(seed in any::<u64>(), x in 0.0f64..8.0, y in 0.0f64..8.0) {
        let (_, psi) = common::atomic_instance(seed, 1, 12);
        let row = voronoi_row(&psi, &[x, y]).unwrap();
        let total: f64 = row.values.iter().map(|&(j, v)| v * psi.weight(j)).sum();
        if row.radius.is_finite() {
            prop_assert!((total - 1.0).abs() < 1e-12, "total {}", total);
        }
        for &(j, v) in &row.values {
            prop_assert!(v > 0.0 && v <= 1.0);
            prop_assert!(in_territory(&psi, &[x, y], j).unwrap());
        }
    }

    #[test]
    fn first_stage_matches_voronoi_kernel(seed in any::<u64>(), x in 0.0f64..8.0) {
        // A single zero-rejection application is the Voronoi kernel.
        let (_, psi) = common::atomic_instance(seed, 1, 10);
        let g = psi.geometry().clone();
        let site = Arc::new(Measure::new(g, vec![Point::new(vec![x, 8.0 - x])], vec![1e-3], Provenance::Explicit).unwrap());
        let inst = Arc::new(stable_transport::Instance::new(site, psi.clone(), stable_transport::ConstraintMode::DensityCap).unwrap());
        let mut st = stable_transport::StageState::new(inst);
        st.application_step();
        let row = voronoi_row(&psi, &[x, 8.0 - x]).unwrap();
        for j in 0..psi.len() {
            let v = row.values.binary_search_by_key(&j, |e| e.0).map_or(0.0, |k| row.values[k].1);
            prop_assert!((st.application(0, j) - v).abs() < 1e-12, "center {}: {} vs {}", j, st.application(0, j), v);
        }
    }
}

use stable_transport::Measure;

#[test]
fn single_precision_solve() {
    let g = Geometry::<f32>::torus(vec![4.0]).unwrap();
    let sites: Vec<Point<f32>> = (0..40).map(|k| Point::new(vec![(k as f32 + 0.5) * 0.1])).collect();
    let phi = Measure32::new(g.clone(), sites, vec![0.1; 40], Provenance::Explicit).unwrap();
    let psi = Measure32::new(g, (0..4).map(|k| Point::new(vec![k as f32])).collect(), vec![1.0; 4], Provenance::Explicit).unwrap();
    let res = solve_site_optimal(phi, psi, &SolveOptions::default()).unwrap();
    assert!(res.converged);
    assert!(validate_constrained(&res.density).is_constrained());
    assert!(check_stable(&res.density, 1e-5).is_stable());
    assert!(check_balanced(&res.density, 1e-5).balanced);
}

#[test]
fn long_creep_is_skipped_exactly() {
    // Three million stages of identical increments before the limit.
    let g = common::generic_instance(4963695998172486317);
    let fast = solve_site_optimal(g.phi.clone(), g.psi.clone(), &SolveOptions::default()).unwrap();
    assert!(fast.converged);
    assert!(fast.stages_run > 3_000_000 && fast.stages_computed < 5_000, "{} / {}", fast.stages_run, fast.stages_computed);
    assert!(common::check_generic(&g).is_empty());
}
