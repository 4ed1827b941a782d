mod common;

use nalgebra::DMatrix;
use ncsde::metrics::{adjusted_rand_index, canonical_angle, principal_angles, subspace_angle};
use ncsde::Error;
use proptest::prelude::*;
use rand::Rng;

/// Contingency-table form with binomial coefficients.
fn contingency_ari(a: &[usize], b: &[usize]) -> f64 {
    let c2 = |v: f64| v * (v - 1.0) / 2.0;
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0.0; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1.0;
    }
    let index: f64 = table.iter().flatten().map(|&v| c2(v)).sum();
    let rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let expected = rows * cols / c2(a.len() as f64);
    let max = 0.5 * (rows + cols);
    if max == expected {
        1.0
    } else {
        (index - expected) / (max - expected)
    }
}

fn labels(rng: &mut impl Rng, m: usize, k: usize) -> Vec<usize> {
    (0..m).map(|_| rng.random_range(0..k)).collect()
}

#[test]
fn ari_matches_exhaustive_pair_oracle() {
    let mut rng = common::rng(7);
    for case in 0..200 {
        let m = rng.random_range(2..=12);
        let (ka, kb) = (rng.random_range(1..=5), rng.random_range(1..=5));
        let a = labels(&mut rng, m, ka);
        let b = labels(&mut rng, m, kb);
        let ari = adjusted_rand_index(&a, &b).unwrap();
        assert_eq!(ari, common::brute_ari(&a, &b), "case {case}: {a:?} {b:?}");
        assert!((ari - contingency_ari(&a, &b)).abs() < 1e-12, "case {case}");
    }
}

#[test]
fn ari_fixture_over_fifteen_pairs() {
    let a = [1, 1, 2, 2, 3, 3];
    let b = [1, 1, 1, 2, 2, 2];
    assert_eq!(common::brute_pairs(&a, &b), (2.0, 1.0, 4.0, 8.0));
    assert_eq!(adjusted_rand_index(&a, &b).unwrap(), common::brute_ari(&a, &b));
}

proptest! {
    #[test]
    fn ari_symmetry_and_relabelling(
        pair in (2usize..=30).prop_flat_map(|m| (
            proptest::collection::vec(0usize..4, m),
            proptest::collection::vec(0usize..4, m),
        )),
        shift in 1usize..50,
    ) {
        let (a, b) = pair;
        let ab = adjusted_rand_index(&a, &b).unwrap();
        let ba = adjusted_rand_index(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-15);
        prop_assert_eq!(adjusted_rand_index(&a, &a).unwrap(), 1.0);
        let renamed: Vec<String> = a.iter().map(|l| format!("c{}", (l * 7 + shift) % 97)).collect();
        prop_assert_eq!(adjusted_rand_index(&renamed, &b).unwrap(), ab);
        prop_assert!(ab <= 1.0 + 1e-15);
    }
}

#[test]
fn ari_rejects_bad_input() {
    assert!(matches!(adjusted_rand_index(&[1, 2, 3], &[1, 2]), Err(Error::Shape(_))));
    assert!(adjusted_rand_index(&[1], &[1]).is_err());
}

#[test]
fn canonical_angle_matches_principal_angle_oracle() {
    let mut rng = common::rng(11);
    for case in 0..100 {
        let n = rng.random_range(6..=60);
        let k1 = rng.random_range(1..=4);
        let k2 = rng.random_range(1..=4);
        let u = common::random_matrix(&mut rng, n, k1, 1.0);
        // A third of the cases compare nearly equal spaces.
        let v = if case % 3 == 0 {
            let mix = common::random_matrix(&mut rng, k1, k1, 1.0) + DMatrix::identity(k1, k1) * 3.0;
            let eps = 10f64.powi(-rng.random_range(2..=7));
            &u * mix + common::random_matrix(&mut rng, n, k1, eps)
        } else {
            common::random_matrix(&mut rng, n, k2, 1.0)
        };
        let got = canonical_angle(&u, &v).unwrap();
        let want = common::angle_oracle(&u, &v);
        assert!((got - want).abs() < 1e-8, "case {case}: {got} vs {want}");
        assert!((0.0..=90.0).contains(&got));
    }
}

#[test]
fn principal_angles_agree_with_largest() {
    let mut rng = common::rng(12);
    let u = common::random_matrix(&mut rng, 50, 3, 1.0);
    let v = common::random_matrix(&mut rng, 50, 3, 1.0);
    let all = principal_angles(&u, &v).unwrap();
    assert_eq!(all.len(), 3);
    assert!(all.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    assert!((all[2] - canonical_angle(&u, &v).unwrap()).abs() < 1e-8);
}

#[test]
fn canonical_angle_symmetry_and_invariance() {
    let mut rng = common::rng(13);
    for _ in 0..30 {
        let u = common::random_matrix(&mut rng, 40, 3, 1.0);
        let v = common::random_matrix(&mut rng, 40, 3, 1.0);
        let uv = canonical_angle(&u, &v).unwrap();
        assert!((uv - canonical_angle(&v, &u).unwrap()).abs() < 1e-10);
        let m = common::random_matrix(&mut rng, 3, 3, 1.0) + DMatrix::identity(3, 3) * 2.0;
        assert!((uv - canonical_angle(&(&u * &m), &v).unwrap()).abs() < 1e-8);
        assert!((uv - canonical_angle(&u, &(&v * m.transpose())).unwrap()).abs() < 1e-8);
        assert!(canonical_angle(&u, &(&u * &m)).unwrap() < 1e-6);
    }
}

#[test]
fn canonical_angle_orthogonal_and_rotation_fixtures() {
    let e = |i: usize| {
        let mut m = DMatrix::zeros(4, 1);
        m[(i, 0)] = 1.0;
        m
    };
    assert!((canonical_angle(&e(0), &e(1)).unwrap() - 90.0).abs() < 1e-12);
    let plane = DMatrix::from_columns(&[e(0).column(0), e(1).column(0)]);
    let mut prev = -1.0;
    for step in 0..=18 {
        let t = (step as f64 * 5.0).to_radians();
        let v = DMatrix::from_column_slice(4, 1, &[t.cos(), 0.0, t.sin(), 0.0]);
        let angle = canonical_angle(&plane, &v).unwrap();
        assert!((angle - step as f64 * 5.0).abs() < 1e-9);
        assert!(angle > prev);
        prev = angle;
    }
}

#[test]
fn rank_deficient_input_reports_rank() {
    let u = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0]);
    let v = DMatrix::identity(4, 2);
    match canonical_angle(&u, &v) {
        Err(Error::Rank { rank, expected }) => assert_eq!((rank, expected), (1, 2)),
        other => panic!("unexpected {other:?}"),
    }
    assert!(subspace_angle(&u, &v, 2).is_err());
}

#[test]
fn subspace_angle_uses_dominant_directions() {
    let mut rng = common::rng(14);
    let basis = common::random_matrix(&mut rng, 30, 2, 1.0);
    let truth = &basis * common::random_matrix(&mut rng, 2, 12, 1.0);
    let noisy = &truth + common::random_matrix(&mut rng, 30, 12, 1e-9);
    assert!(subspace_angle(&truth, &noisy, 2).unwrap() < 1e-5);
    assert!(subspace_angle(&truth, &noisy, 0).is_err());
}
