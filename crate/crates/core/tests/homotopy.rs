mod common;

use common::*;
use proptest::prelude::*;
use sls::homotopy::{
    path_step, solve_for_lambda, solve_until_support_size, start, EventKind, HomotopyError,
    LassoProblem, Termination,
};
use sls::linalg::DenseMatrix;

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

#[test]
fn lambda_max_matches_direct_correlations() {
    let mut r = rng(31);
    let a = gaussian_matrix(&mut r, 10, 25);
    let y = gaussian_vec(&mut r, 10);
    let p = LassoProblem::new(&a, &y).unwrap();
    let direct: Vec<f64> = (0..25).map(|j| dotp(a.col(j), &y).abs()).collect();
    let best = direct.iter().cloned().fold(0.0, f64::max);
    let (lm, arg) = p.lambda_max();
    assert!((lm - best).abs() < 1e-12);
    assert_eq!(direct[arg], best);
}

#[test]
fn orthogonal_design_breakpoints_are_sorted_magnitudes() {
    let mut r = rng(32);
    let d = orthonormal_dictionary(&mut r, 12);
    let z = gaussian_vec(&mut r, 12);
    // y = Q z, so the correlations are exactly z
    let y = d.matrix().mul_vec(&z).unwrap();
    let p = LassoProblem::new(d.matrix(), &y).unwrap();
    let mut order: Vec<usize> = (0..12).collect();
    order.sort_by(|&a, &b| z[b].abs().total_cmp(&z[a].abs()));

    let mut s = start(&p);
    for (step, &j) in order.iter().enumerate() {
        let e = path_step(&mut s, &p).unwrap();
        assert_eq!(e.index, j, "step {step}");
        assert!((e.lambda - z[j].abs()).abs() < 1e-10);
        let x = s.full_coefficients(12);
        for k in 0..12 {
            assert!((x[k] - soft(z[k], e.lambda)).abs() < 1e-10);
        }
    }
    assert!(matches!(
        path_step(&mut s, &p),
        Err(HomotopyError::RankLimit)
    ));
}

#[test]
fn orthogonal_design_target_selects_top_k() {
    let mut r = rng(33);
    let d = orthonormal_dictionary(&mut r, 16);
    let z = gaussian_vec(&mut r, 16);
    let y = d.matrix().mul_vec(&z).unwrap();
    let p = LassoProblem::new(d.matrix(), &y).unwrap();
    let mut order: Vec<usize> = (0..16).collect();
    order.sort_by(|&a, &b| z[b].abs().total_cmp(&z[a].abs()));
    for k in 0..=16 {
        let s = solve_until_support_size(&p, k, 10 * k).unwrap();
        let mut got = s.active().to_vec();
        got.sort_unstable();
        let mut want = order[..k].to_vec();
        want.sort_unstable();
        assert_eq!(got, want);
    }
}

fn assert_matches_oracle(a: &DenseMatrix, y: &[f64], lambda: f64, x: &[f64]) {
    let want = lasso_coordinate_descent(a, y, lambda, 1e-10);
    for (j, (g, w)) in x.iter().zip(&want).enumerate() {
        assert!(
            (g - w).abs() < 1e-6,
            "coef {j}: {g} vs {w} at lambda {lambda}"
        );
    }
}

#[test]
fn breakpoints_match_fixed_lambda_oracle() {
    let mut r = rng(34);
    let a = scaled_gaussian_matrix(&mut r, 15, 30);
    let y = gaussian_vec(&mut r, 15);
    let p = LassoProblem::new(&a, &y).unwrap();
    let mut s = start(&p);
    let mut checked = 0;
    loop {
        match path_step(&mut s, &p) {
            Ok(_) => {
                assert!(s.kkt_violation(&p) <= s.kkt_tolerance());
                // the last few breakpoints before the rank limit are too
                // ill-conditioned for coordinate descent to settle quickly
                if s.active().len() <= 12 {
                    assert_matches_oracle(&a, &y, s.lambda(), &s.full_coefficients(30));
                    checked += 1;
                }
            }
            Err(HomotopyError::RankLimit) | Err(HomotopyError::NoEvent) => break,
            Err(e) => panic!("{e}"),
        }
    }
    assert!(checked >= 12);
}

#[test]
fn half_lambda_max_matches_oracle() {
    let mut r = rng(35);
    for _ in 0..5 {
        let a = scaled_gaussian_matrix(&mut r, 20, 40);
        let y = gaussian_vec(&mut r, 20);
        let p = LassoProblem::new(&a, &y).unwrap();
        let lam = p.lambda_max().0 / 2.0;
        let s = solve_for_lambda(&p, lam, 400).unwrap();
        assert_eq!(s.termination(), Some(Termination::LambdaReached));
        assert_eq!(s.lambda(), lam);
        assert_matches_oracle(&a, &y, lam, &s.full_coefficients(40));
    }
}

#[test]
fn zero_lambda_full_rank_is_least_squares() {
    let mut r = rng(36);
    let a = scaled_gaussian_matrix(&mut r, 20, 6);
    let y = gaussian_vec(&mut r, 20);
    let p = LassoProblem::new(&a, &y).unwrap();
    let s = solve_for_lambda(&p, 0.0, 60).unwrap();
    assert_eq!(s.lambda(), 0.0);
    let want = normal_equations(&to_rows(&a), &y);
    let got = s.full_coefficients(6);
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-8);
    }
}

#[test]
fn overcomplete_target_beyond_columns_stops_cleanly() {
    let mut r = rng(37);
    let a = gaussian_matrix(&mut r, 10, 30);
    let y = gaussian_vec(&mut r, 10);
    let p = LassoProblem::new(&a, &y).unwrap();
    let s = solve_until_support_size(&p, 40, 400).unwrap();
    assert!(s.active().len() <= 10);
    assert!(matches!(
        s.termination(),
        Some(Termination::RankLimit)
            | Some(Termination::ReachedZero)
            | Some(Termination::TargetReached)
    ));
    assert!(s.kkt_violation(&p) <= s.kkt_tolerance());
    if s.lambda() > 1e-3 {
        assert_matches_oracle(&a, &y, s.lambda(), &s.full_coefficients(30));
    }
}

#[test]
fn sign_changes_cause_deletions() {
    // search a few seeds for a path with a deletion and check it stays valid
    let mut found = false;
    for seed in 0..200 {
        let mut r = rng(1000 + seed);
        let a = scaled_gaussian_matrix(&mut r, 8, 20);
        let y = gaussian_vec(&mut r, 8);
        let p = LassoProblem::new(&a, &y).unwrap();
        let s = solve_until_support_size(&p, 8, 200).unwrap();
        if s.event_log().iter().any(|e| e.kind == EventKind::Delete) {
            found = true;
            assert!(s.kkt_violation(&p) <= s.kkt_tolerance());
            let mut replay = start(&p);
            for e in s.event_log() {
                let got = path_step(&mut replay, &p).unwrap();
                assert_eq!(&got, e);
                assert!(replay.kkt_violation(&p) <= replay.kkt_tolerance());
                assert_matches_oracle(&a, &y, replay.lambda(), &replay.full_coefficients(20));
            }
            break;
        }
    }
    assert!(found, "no path with a deletion among the sampled instances");
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(256) })]

    #[test]
    fn path_invariants(seed in any::<u64>(), rows in 4usize..20, cols in 5usize..40) {
        let mut r = rng(seed);
        let a = scaled_gaussian_matrix(&mut r, rows, cols);
        let y = gaussian_vec(&mut r, rows);
        let p = LassoProblem::new(&a, &y).unwrap();
        let mut s = start(&p);
        let tol = s.kkt_tolerance();
        let tie = 1e-12 * s.lambda_max().max(1.0);
        let mut fit = s.data_fit(&p);
        let mut last_lambda = s.lambda();
        for _ in 0..(10 * cols) {
            match path_step(&mut s, &p) {
                Ok(e) => {
                    prop_assert!(s.kkt_violation(&p) <= tol);
                    prop_assert!(e.lambda <= last_lambda + tie);
                    last_lambda = e.lambda;
                    let now = s.data_fit(&p);
                    prop_assert!(now <= fit + 1e-9 * (1.0 + fit));
                    fit = now;
                    // a freshly inserted coefficient is zero up to roundoff
                    let fresh = (e.kind == EventKind::Insert).then_some(e.index);
                    for ((&j, &x), &sg) in s.active().iter().zip(s.coefficients()).zip(s.signs()) {
                        if Some(j) != fresh && x.abs() > 1e-12 {
                            prop_assert_eq!(x.signum(), sg);
                        }
                    }
                }
                Err(HomotopyError::RankLimit) | Err(HomotopyError::NoEvent) => break,
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }
    }

    #[test]
    fn support_size_stop_never_overshoots(seed in any::<u64>(), target in 0usize..15) {
        let mut r = rng(seed);
        let a = scaled_gaussian_matrix(&mut r, 12, 30);
        let y = gaussian_vec(&mut r, 12);
        let p = LassoProblem::new(&a, &y).unwrap();
        let s = solve_until_support_size(&p, target, 10 * target.max(1) + 50).unwrap();
        prop_assert!(s.active().len() <= target);
        match s.termination() {
            Some(Termination::TargetReached) => {
                prop_assert_eq!(s.active().len(), target.min(12));
            }
            Some(Termination::RankLimit) => prop_assert_eq!(s.active().len(), 12),
            Some(Termination::ReachedZero) => prop_assert_eq!(s.lambda(), 0.0),
            other => prop_assert!(false, "unexpected termination {:?}", other),
        }
    }
}
