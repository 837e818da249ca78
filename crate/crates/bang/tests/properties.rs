//! Module-level invariants checked over random inputs: graph generation and
//! serialization, the latent factorization, residual algebra, relabeling
//! equivariance of the discovery loop, and robustness of the EL solver.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, RowDVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bang::algo::{run_bang, Backend, DiscoveryConfig};
use bang::eltest::{el_test, threshold_test, MomentConditions, EL_DEFAULT_MAX_ITERS};
use bang::graph::MixedGraph;
use bang::moments::{pseudo_ancestors, residual_rows, MomentOracle};
use bang::sem::{draw_parameters, latent_factorization, ErrorFamily};

#[test]
fn random_baps_are_valid_across_presets() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (d, b) in [(3usize, 3usize), (5, 5), (8, 7)] {
        for _ in 0..1000 {
            let g = MixedGraph::random_bap(6, d, b, false, &mut rng);
            assert!(g.validate().is_empty());
            assert_eq!(g.num_directed(), d);
            // bidirected count may fall short only when the bow-free pool runs dry
            assert!(g.num_bidirected() <= b);
        }
    }
}

#[test]
fn random_ancestral_graphs_satisfy_ancestrality() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let g = MixedGraph::random_bap(6, 5, 5, true, &mut rng);
        for v in 0..6 {
            let rel = g.relations(v).unwrap();
            assert!(
                rel.ancestors.is_disjoint(&rel.siblings),
                "an({v}) meets sib({v}) in {g:?}"
            );
        }
    }
}

#[test]
fn latent_factorization_reproduces_omega() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (d, b) in [(3usize, 3usize), (5, 5), (8, 7)] {
        for _ in 0..1000 {
            let g = MixedGraph::random_bap(6, d, b, false, &mut rng);
            let params = draw_parameters(&g, true, &mut rng);
            let product = &params.l * params.l.transpose();
            let gap = (&product - &params.omega).abs().max();
            assert!(gap < 1e-10, "LL^T off by {gap}");
            let (l2, omega2) = latent_factorization(&params.omega, &g);
            assert_eq!(omega2, params.omega);
            assert_eq!(l2, params.l);
        }
    }
}

#[test]
fn implied_covariance_is_positive_definite() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let g = MixedGraph::random_bap(6, 5, 5, false, &mut rng);
        let params = draw_parameters(&g, true, &mut rng);
        let sigma = params.implied_covariance().unwrap();
        assert!((&sigma - sigma.transpose()).abs().max() < 1e-12);
        assert!(sigma.clone().cholesky().is_some(), "implied covariance not PD");
    }
}

#[test]
fn discovery_is_equivariant_under_relabeling() {
    // running on a relabeled model recovers the relabeled graph
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let config = DiscoveryConfig::oracle(3);
    for _ in 0..50 {
        let g = MixedGraph::random_bap(5, 4, 3, false, &mut rng);
        let mut perm: Vec<usize> = (0..5).collect();
        perm.shuffle(&mut rng);
        let relabeled = g.relabel(&perm).unwrap();

        let params = draw_parameters(&relabeled, true, &mut rng);
        let oracle = MomentOracle::new(&params, ErrorFamily::Gamma).unwrap();
        let backend = Backend::from_oracle(&oracle, params.implied_covariance().unwrap());
        let outcome = run_bang(&backend, &config);
        assert_eq!(outcome.graph, relabeled);
    }
}

#[test]
fn residual_rows_invert_the_effect_matrix() {
    // with D equal to the true B, residuals recover the mixing of the errors
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let g = MixedGraph::random_bap(5, 4, 2, false, &mut rng);
        let params = draw_parameters(&g, true, &mut rng);
        let oracle = MomentOracle::new(&params, ErrorFamily::Gamma).unwrap();
        let gamma = residual_rows(oracle.mixing(), &params.b);
        let gap = (&gamma - &params.l).abs().max();
        assert!(gap < 1e-9, "residuals under D=B differ from L by {gap}");
    }
}

#[test]
fn pseudo_ancestors_agree_with_true_ancestors_under_b() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let g = MixedGraph::random_bap(6, 6, 2, false, &mut rng);
        let params = draw_parameters(&g, true, &mut rng);
        let v = rng.random_range(0..6);
        let c: BTreeSet<usize> = [v].into_iter().collect();
        let psan = pseudo_ancestors(&params.b, &c);
        let rel = g.relations(v).unwrap();
        assert_eq!(psan, rel.ancestors_inclusive(v));
    }
}

#[test]
fn el_statistic_is_scale_invariant() {
    // multiplying every condition by a constant leaves the ELR unchanged
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = DMatrix::from_fn(400, 2, |_, _| rng.random::<f64>() - 0.45);
    let base = el_test(&MomentConditions { g: g.clone() }, 0.05, EL_DEFAULT_MAX_ITERS).unwrap();
    let scaled = el_test(
        &MomentConditions { g: g * 37.0 },
        0.05,
        EL_DEFAULT_MAX_ITERS,
    )
    .unwrap();
    assert!((base.statistic - scaled.statistic).abs() < 1e-6);
}

#[test]
fn el_never_rejects_fully_balanced_conditions() {
    // antisymmetric sample: the empirical mean is exactly zero
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let half = DMatrix::from_fn(250, 2, |_, _| rng.random::<f64>() - 0.5);
    let mut g = DMatrix::zeros(500, 2);
    g.view_mut((0, 0), (250, 2)).copy_from(&half);
    g.view_mut((250, 0), (250, 2)).copy_from(&(-half));
    let decision = el_test(&MomentConditions { g }, 0.05, EL_DEFAULT_MAX_ITERS).unwrap();
    assert!(decision.independent);
}

proptest! {
    #[test]
    fn graph_json_roundtrips(seed in 0u64..5000, one_indexed in proptest::bool::ANY) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: usize = rng.random_range(1..=8);
        let d = rng.random_range(0..=p.saturating_sub(1));
        let b = rng.random_range(0..=p / 2);
        let g = MixedGraph::random_bap(p, d, b, false, &mut rng);
        let back = MixedGraph::from_json(&g.to_json(one_indexed)).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn relabel_then_inverse_is_identity(seed in 0u64..5000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = rng.random_range(2..=7);
        let g = MixedGraph::random_bap(p, p - 1, p / 2, false, &mut rng);
        let mut perm: Vec<usize> = (0..p).collect();
        perm.shuffle(&mut rng);
        let mut inverse = vec![0usize; p];
        for (i, &pi) in perm.iter().enumerate() {
            inverse[pi] = i;
        }
        let round = g.relabel(&perm).unwrap().relabel(&inverse).unwrap();
        prop_assert_eq!(round, g);
    }

    #[test]
    fn topological_order_respects_edges(seed in 0u64..5000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = rng.random_range(1..=8);
        let d = rng.random_range(0..=p * (p - 1) / 2);
        let g = MixedGraph::random_bap(p, d, 0, false, &mut rng);
        let order = g.topological_order().unwrap();
        let position: Vec<usize> = {
            let mut pos = vec![0; p];
            for (i, &v) in order.iter().enumerate() {
                pos[v] = i;
            }
            pos
        };
        for (u, v) in g.directed_edges() {
            prop_assert!(position[u] < position[v]);
        }
    }

    #[test]
    fn threshold_test_matches_band(stat in -1.0f64..1.0, eta in 0.01f64..1.0) {
        let decision = threshold_test(&[stat], eta).unwrap();
        prop_assert_eq!(decision.independent, stat.abs() < eta / 2.0);
    }

    #[test]
    fn el_p_values_stay_in_unit_interval(seed in 0u64..2000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(30..300);
        let q = rng.random_range(1..4);
        let shift = rng.random_range(-0.3..0.3);
        let g = DMatrix::from_fn(n, q, |_, _| rng.random::<f64>() - 0.5 + shift);
        let decision = el_test(&MomentConditions { g }, 0.05, EL_DEFAULT_MAX_ITERS).unwrap();
        if let Some(p) = decision.p_value {
            prop_assert!((0.0..=1.0).contains(&p));
        }
        prop_assert!(decision.statistic >= 0.0 || decision.statistic.is_nan());
    }
}

#[test]
fn oracle_and_sample_statistics_agree_in_the_limit() {
    // light version of the cross-validation criterion: one config, n = 2e5
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let g = MixedGraph::new(3, [(0, 1)], [(1, 2)]).unwrap();
    let params = draw_parameters(&g, true, &mut rng);
    let oracle = MomentOracle::new(&params, ErrorFamily::Gamma).unwrap();
    let d = DMatrix::zeros(3, 3);
    let truth = {
        let gamma = residual_rows(oracle.mixing(), &d);
        oracle
            .evaluator()
            .cross_moment(&gamma.row(1).clone_owned(), &gamma.row(2).clone_owned(), 3)
            .unwrap()
    };
    let n = 200_000;
    let y = params.sample_data(ErrorFamily::Gamma, n, &mut rng).unwrap();
    let col = |j: usize| {
        let mut v = RowDVector::zeros(n);
        for i in 0..n {
            v[i] = y[(i, j)];
        }
        let m = v.mean();
        v.add_scalar_mut(-m);
        v
    };
    let (g1, g2) = (col(1), col(2));
    let sample: f64 = (0..n).map(|i| g1[i] * g1[i] * g2[i]).sum::<f64>() / n as f64;
    assert!(
        (sample - truth).abs() < 0.15,
        "sample {sample} vs oracle {truth}"
    );
}
