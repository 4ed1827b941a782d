mod common;

use nalgebra::DMatrix;
use ncsde::clustering::{
    cut, elbow, elbow_analysis, euclidean_distances, select_k, ward_linkage, within_ss, wss_curve, DistanceMatrix,
};
use ncsde::metrics::adjusted_rand_index;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_points(rng: &mut impl Rng, m: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, d, |_, _| StandardNormal.sample(rng))
}

#[test]
fn ward_matches_naive_oracle() {
    let mut rng = common::rng(21);
    for fixture in 0..60 {
        let m = 2 + fixture % 9;
        let d = 1 + fixture % 4;
        let pts = random_points(&mut rng, m, d);
        let dend = ward_linkage(&euclidean_distances(&pts).unwrap(), None).unwrap();
        let oracle = common::naive_ward(&pts);
        assert_eq!(dend.merges.len(), m - 1);
        for (got, want) in dend.merges.iter().zip(&oracle) {
            assert_eq!((got.left, got.right, got.size), (want.0, want.1, want.3), "fixture {fixture}");
            assert!((got.height - want.2).abs() <= 1e-10 * want.2.max(1.0), "fixture {fixture}");
        }
    }
}

#[test]
fn six_point_fixture_matches_oracle() {
    let pts = DMatrix::from_row_slice(6, 2, &[0.0, 0.0, 0.3, 0.1, 4.0, 4.0, 4.2, 3.9, 9.0, 0.0, 8.7, 0.5]);
    let dend = ward_linkage(&euclidean_distances(&pts).unwrap(), None).unwrap();
    let oracle = common::naive_ward(&pts);
    for (got, want) in dend.merges.iter().zip(&oracle) {
        assert_eq!((got.left, got.right), (want.0, want.1));
        assert!((got.height - want.2).abs() < 1e-12);
    }
}

#[test]
fn distances_match_double_loop() {
    let mut rng = common::rng(22);
    let pts = random_points(&mut rng, 5, 3);
    let d = euclidean_distances(&pts).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let brute: f64 = (0..3).map(|c| (pts[(i, c)] - pts[(j, c)]).powi(2)).sum::<f64>().sqrt();
            assert!((d.values()[(i, j)] - brute).abs() < 1e-12);
            for k in 0..5 {
                assert!(d.values()[(i, k)] <= d.values()[(i, j)] + d.values()[(j, k)] + 1e-12);
            }
        }
    }
    let same = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]);
    assert_eq!(euclidean_distances(&same).unwrap().values()[(0, 1)], 0.0);
    let unit = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    assert_eq!(euclidean_distances(&unit).unwrap().values()[(0, 1)], 1.0);
    assert!(euclidean_distances(&DMatrix::from_element(2, 1, f64::NAN)).is_err());
}

#[test]
fn distance_matrix_validation() {
    assert!(DistanceMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0])).is_err());
    assert!(DistanceMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0])).is_err());
    assert!(DistanceMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0])).is_err());
    assert!(DistanceMatrix::new(DMatrix::zeros(2, 3)).is_err());
    assert!(DistanceMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn heights_monotone_and_cuts_nest(seed in 0u64..10_000, m in 2usize..25, d in 1usize..4) {
        let mut rng = common::rng(seed);
        let pts = random_points(&mut rng, m, d);
        let dend = ward_linkage(&euclidean_distances(&pts).unwrap(), None).unwrap();
        prop_assert!(dend.merges.windows(2).all(|w| w[1].height >= w[0].height - 1e-12));
        let mut coarser = cut(&dend, 1).unwrap();
        prop_assert!(coarser.labels.iter().all(|&l| l == 1));
        for k in 2..=m {
            let finer = cut(&dend, k).unwrap();
            let mut used: Vec<usize> = finer.labels.clone();
            used.sort_unstable();
            used.dedup();
            prop_assert_eq!(used, (1..=k).collect::<Vec<_>>());
            // Series together at k stay together at k - 1.
            for i in 0..m {
                for j in 0..m {
                    if finer.labels[i] == finer.labels[j] {
                        prop_assert_eq!(coarser.labels[i], coarser.labels[j]);
                    }
                }
            }
            coarser = finer;
        }
        prop_assert_eq!(cut(&dend, m).unwrap().labels, (1..=m).collect::<Vec<_>>());
    }

    #[test]
    fn elbow_ignores_positive_scaling(
        wss in proptest::collection::vec(0.0f64..1000.0, 3..15),
        scale in 0.01f64..100.0,
    ) {
        let scaled: Vec<f64> = wss.iter().map(|v| v * scale).collect();
        // Scaling by a power of two is exact; others may flip exact ties only.
        let pow2: Vec<f64> = wss.iter().map(|v| v * 8.0).collect();
        prop_assert_eq!(elbow(&pow2).unwrap(), elbow(&wss).unwrap());
        let k = elbow(&scaled).unwrap();
        prop_assert!((2..wss.len()).contains(&k));
    }
}

#[test]
fn wss_non_increasing_on_random_data() {
    let mut rng = common::rng(23);
    let mut violations = 0;
    for _ in 0..50 {
        let m = rng.random_range(3..30);
        let pts = random_points(&mut rng, m, 3);
        let wss = wss_curve(&pts, m).unwrap();
        violations += wss.windows(2).filter(|w| w[1] > w[0] + 1e-9 * w[0].max(1.0)).count();
        assert!(wss[m - 1].abs() < 1e-12);
        let centroid = pts.row_mean();
        let total: f64 = (0..m).map(|i| (pts.row(i) - &centroid).norm_squared()).sum();
        assert!((wss[0] - total).abs() < 1e-9 * total);
    }
    assert_eq!(violations, 0);
}

#[test]
fn three_gaussian_groups_are_recovered() {
    let mut rng = common::rng(24);
    let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
    let truth: Vec<usize> = (0..45).map(|i| i % 3).collect();
    let pts = DMatrix::from_fn(45, 2, |i, c| {
        let z: f64 = StandardNormal.sample(&mut rng);
        centers[truth[i]][c] + 0.5 * z
    });
    let dend = ward_linkage(&euclidean_distances(&pts).unwrap(), None).unwrap();
    let found = cut(&dend, 3).unwrap();
    assert_eq!(adjusted_rand_index(&truth, &found.labels).unwrap(), 1.0);
    let res = elbow_analysis(&pts, 8).unwrap();
    assert_eq!(res.suggested_k, 3);
    assert!(res.reliable);
    assert!((res.wss[2] - within_ss(&pts, &found.labels)).abs() < 1e-9);
}

#[test]
fn elbow_fixtures() {
    assert_eq!(elbow(&[100.0, 10.0, 9.0, 8.0, 7.0]).unwrap(), 2);
    // Slope -20 up to k = 3, then -1.
    let two_slope: Vec<f64> = (1..=8).map(|k| if k <= 3 { 100.0 - 20.0 * (k - 1) as f64 } else { 60.0 - (k - 3) as f64 }).collect();
    assert_eq!(elbow(&two_slope).unwrap(), 3);
    assert!(elbow(&[3.0, 2.0]).is_err());
}

#[test]
fn identical_series_give_unreliable_elbow() {
    let (ps, basis, _) = common::mixture_problem(128, 1, 8, 3);
    let col = ps.ordinates().column(0).into_owned();
    let same = ncsde::spectral::PeriodogramSet::new(DMatrix::from_columns(&vec![col; 6]), ps.grid().clone()).unwrap();
    let res = select_k(&same, &basis, 4).unwrap();
    assert!(!res.reliable);
    assert!(res.wss.iter().all(|&w| w.abs() < 1e-12));
}

#[test]
fn leaf_labels_are_checked() {
    let d = euclidean_distances(&DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 3.0])).unwrap();
    assert!(ward_linkage(&d, Some(vec!["a".into()])).is_err());
    let dend = ward_linkage(&d, Some(vec!["a".into(), "b".into(), "c".into()])).unwrap();
    assert_eq!(dend.leaf_labels, ["a", "b", "c"]);
    assert!(ward_linkage(&DistanceMatrix::new(DMatrix::zeros(0, 0)).unwrap(), None).is_err());
}
