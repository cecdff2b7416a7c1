mod common;

use common::*;
use proptest::prelude::*;
use sls::bench::exhaustive_oracle;
use sls::greedy::{
    build_projected_problem, run_forward_selection, score_ols, score_omp, score_sls, GreedyConfig,
    Method, SupportSet,
};
use sls::linalg::GrowableFactorization;

#[test]
fn omp_scores_match_direct_correlations() {
    let mut r = rng(41);
    let d = unit_dictionary(&mut r, 10, 20);
    let res = gaussian_vec(&mut r, 10);
    let support = SupportSet::from_indices(&[3, 11], 20).unwrap();
    let s = score_omp(&d, &support, &res);
    for j in 0..20 {
        if support.contains(j) {
            assert_eq!(s[j], f64::NEG_INFINITY);
        } else {
            assert!((s[j] - dotp(d.atom(j), &res).abs()).abs() < 1e-12);
        }
    }
}

#[test]
fn ols_scores_match_brute_force_refits() {
    let mut r = rng(42);
    let d = unit_dictionary(&mut r, 10, 20);
    let y = gaussian_vec(&mut r, 10);
    let support = [7, 2];
    let f = GrowableFactorization::with_support(d.matrix(), &support).unwrap();
    let s = score_ols(&d, &f, &y);
    let energy = dotp(&y, &y);
    for j in 0..20 {
        if support.contains(&j) {
            assert_eq!(s[j], f64::NEG_INFINITY);
            continue;
        }
        let refit = support_residual(d.matrix(), &y, &[7, 2, j]).unwrap();
        assert!((s[j] - (energy - refit)).abs() < 1e-9, "atom {j}");
    }
}

#[test]
fn omp_and_ols_agree_on_first_pick() {
    for seed in 0..20 {
        let mut r = rng(430 + seed);
        let d = unit_dictionary(&mut r, 12, 30);
        let y = gaussian_vec(&mut r, 12);
        let omp = run_forward_selection(&d, &y, &GreedyConfig::new(Method::Omp, 1)).unwrap();
        let ols = run_forward_selection(&d, &y, &GreedyConfig::new(Method::Ols, 1)).unwrap();
        assert_eq!(omp.support.indices(), ols.support.indices());
        let best = (0..30)
            .max_by(|&a, &b| {
                dotp(d.atom(a), &y)
                    .abs()
                    .total_cmp(&dotp(d.atom(b), &y).abs())
                    .then(b.cmp(&a))
            })
            .unwrap();
        assert_eq!(omp.support.indices(), &[best]);
    }
}

fn top_magnitudes(z: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[b].abs().total_cmp(&z[a].abs()).then(a.cmp(&b)));
    order.truncate(k);
    order
}

#[test]
fn orthonormal_dictionary_all_methods_pick_largest_coefficients() {
    let mut r = rng(44);
    let d = orthonormal_dictionary(&mut r, 16);
    let z = gaussian_vec(&mut r, 16);
    let y = d.matrix().mul_vec(&z).unwrap();
    for k in [1, 4, 8, 16] {
        let want = top_magnitudes(&z, k);
        for m in Method::ALL {
            let cfg = GreedyConfig::new(m, k).with_scores();
            let res = run_forward_selection(&d, &y, &cfg).unwrap();
            assert_eq!(res.support.indices(), &want[..], "{m} K={k}");
            for (&j, &a) in res.support.indices().iter().zip(&res.amplitudes) {
                assert!((a - z[j]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn projected_problem_matches_dense_projector() {
    let mut r = rng(45);
    let d = unit_dictionary(&mut r, 10, 16);
    let y = gaussian_vec(&mut r, 10);
    let support = [5, 0, 9];
    let f = GrowableFactorization::with_support(d.matrix(), &support).unwrap();
    let pp = build_projected_problem(&d, &f, &y);
    let a_s = columns(d.matrix(), &support);
    let py = dense_projector_apply(&a_s, &y);
    for (g, w) in pp.target.iter().zip(&py) {
        assert!((g - w).abs() < 1e-9);
    }
    assert_eq!(pp.index_map.len(), 13);
    assert!(pp.pruned.is_empty());
    for (col, &j) in pp.index_map.iter().enumerate() {
        assert!(!support.contains(&j));
        let want = dense_projector_apply(&a_s, d.atom(j));
        for (g, w) in pp.design.col(col).iter().zip(&want) {
            assert!((g - w).abs() < 1e-9);
        }
    }
}

#[test]
fn sls_scores_on_orthonormal_dictionary_are_soft_thresholds() {
    let mut r = rng(46);
    let d = orthonormal_dictionary(&mut r, 20);
    let z = gaussian_vec(&mut r, 20);
    let y = d.matrix().mul_vec(&z).unwrap();
    let f = GrowableFactorization::new(d.matrix());
    let pp = build_projected_problem(&d, &f, &y);
    let cfg = GreedyConfig::new(Method::Sls, 2);
    let s = score_sls(&pp, 2, &cfg).unwrap();
    assert_eq!(s.target, 6);
    let order = top_magnitudes(&z, 20);
    let lambda = z[order[5]].abs();
    assert!((s.state.lambda() - lambda).abs() < 1e-10);
    for j in 0..20 {
        let want = (z[j].abs() - lambda).max(0.0);
        assert!((s.scores[j] - want).abs() < 1e-10);
    }
    let best = (0..20)
        .max_by(|&a, &b| s.scores[a].total_cmp(&s.scores[b]))
        .unwrap();
    assert_eq!(best, order[0]);
}

#[test]
fn greedy_never_beats_exhaustive_oracle() {
    for seed in 0..30 {
        let mut r = rng(470 + seed);
        let d = unit_dictionary(&mut r, 8, 12);
        let y = gaussian_vec(&mut r, 8);
        for k in 1..=3 {
            let oracle = exhaustive_oracle(&d, &y, k).unwrap();
            for m in Method::ALL {
                let res = run_forward_selection(&d, &y, &GreedyConfig::new(m, k)).unwrap();
                assert!(
                    res.residual_norm_sq() >= oracle.residual_norm_sq - 1e-9,
                    "{m} K={k}"
                );
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(48) })]

    #[test]
    fn selection_invariants(seed in any::<u64>(), k in 1usize..8, method in 0usize..3) {
        let m = Method::ALL[method];
        let mut r = rng(seed);
        let d = unit_dictionary(&mut r, 14, 28);
        let y = gaussian_vec(&mut r, 14);
        let cfg = GreedyConfig::new(m, k).with_scores();
        let res = run_forward_selection(&d, &y, &cfg).unwrap();
        prop_assert!(!res.early_termination);
        prop_assert_eq!(res.support.len(), k);

        let mut seen = Vec::new();
        let mut last = dotp(&y, &y);
        for (t, rec) in res.trace.iter().enumerate() {
            prop_assert!(!seen.contains(&rec.selected));
            seen.push(rec.selected);
            let prefix = &res.support.indices()[..=t];
            let now = support_residual(d.matrix(), &y, prefix).unwrap();
            prop_assert!(now <= last + 1e-10);
            last = now;
        }
        prop_assert!((res.residual_norm_sq() - last).abs() < 1e-9);
        for &j in res.support.indices() {
            prop_assert!(dotp(d.atom(j), &res.residual).abs() < 1e-9);
        }

        let again = run_forward_selection(&d, &y, &cfg).unwrap();
        prop_assert_eq!(again.support.indices(), res.support.indices());
        prop_assert_eq!(again.amplitudes, res.amplitudes);
    }
}
