mod common;

use nalgebra::{DMatrix, DVector};
use ncsde::baselines::EstimatorKind;
use ncsde::engine::LambdaMode;
use ncsde::simulate::{
    ar3_generate, default_models, generate_mixture, reflection_coefficients, run_once, run_study, true_sdf, ArModel,
    MixtureDesign, RunOutcome, StudyConfig,
};
use ncsde::spectral::{fourier_grid, periodogram, TimeSeriesSet};
use rand::Rng;
use std::f64::consts::PI;

/// Autocovariances `gamma(0..=3)` from the Yule-Walker system
/// `gamma(h) = sum_k phi_k gamma(|h - k|) + sigma2 [h = 0]`.
fn yule_walker(phi: [f64; 3], sigma2: f64) -> [f64; 4] {
    let mut a = DMatrix::<f64>::identity(4, 4);
    for h in 0..4usize {
        for (k, &p) in phi.iter().enumerate() {
            let lag = (h as isize - (k as isize + 1)).unsigned_abs();
            a[(h, lag)] -= p;
        }
    }
    let rhs = DVector::from_column_slice(&[sigma2, 0.0, 0.0, 0.0]);
    let g = a.lu().solve(&rhs).unwrap();
    [g[0], g[1], g[2], g[3]]
}

#[test]
fn sdf_integrates_to_process_variance() {
    for model in default_models().into_iter().chain([ArModel::new([0.3, -0.2, 0.4], 2.0).unwrap()]) {
        let points = 10_000;
        let h = 1.0 / points as f64;
        let mut integral = 0.0;
        for j in 0..=points {
            let w = -0.5 + j as f64 * h;
            let weight = if j == 0 || j == points { 0.5 } else { 1.0 };
            integral += weight * model.sdf_at(w);
        }
        integral *= h;
        let gamma0 = yule_walker(model.phi(), model.sigma2())[0];
        assert!((integral - gamma0).abs() < 1e-3 * gamma0, "{:?}: {integral} vs {gamma0}", model.phi());
    }
}

#[test]
fn sdf_fixtures() {
    let model = ArModel::new([0.5, 0.1, 0.1], 1.0).unwrap();
    assert!((model.sdf_at(0.0) - 1.0 / 0.09).abs() < 1e-12);
    let white = ArModel::new([0.0; 3], 3.0).unwrap();
    let grid = fourier_grid(50).unwrap();
    assert!(true_sdf(&white, &grid).iter().all(|&v| v == 3.0));
    assert!(default_models().iter().all(|m| true_sdf(m, &grid).iter().all(|&v| v > 0.0)));
}

#[test]
fn white_noise_sample_variance_within_clt_bound() {
    let n = 100_000;
    let x = ar3_generate(&ArModel::new([0.0; 3], 1.0).unwrap(), n, 77);
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((var - 1.0).abs() <= 5.0 * (2.0 / n as f64).sqrt(), "{var}");
}

#[test]
fn lag_one_autocorrelation_matches_yule_walker() {
    let phi = [0.5, 0.1, 0.1];
    let n = 100_000;
    let x = ar3_generate(&ArModel::new(phi, 1.0).unwrap(), n, 78);
    let mean = x.iter().sum::<f64>() / n as f64;
    let c0: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let c1: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    let g = yule_walker(phi, 1.0);
    assert!((c1 / c0 - g[1] / g[0]).abs() < 0.02);
}

#[test]
fn generation_is_reproducible() {
    let model = default_models()[2];
    assert_eq!(ar3_generate(&model, 500, 5), ar3_generate(&model, 500, 5));
    let design = MixtureDesign::standard(64, 12, 99);
    let (a, la) = generate_mixture(&design).unwrap();
    let (b, lb) = generate_mixture(&design).unwrap();
    assert_eq!(la, lb);
    assert_eq!(a.values(), b.values());
    // Series i depends only on the seed and its own label.
    let bigger = MixtureDesign { m: 20, ..design };
    let (c, lc) = generate_mixture(&bigger).unwrap();
    assert_eq!(&lc[..12], &la[..]);
    assert_eq!(c.values().columns(0, 12), a.values().columns(0, 12));
}

#[test]
fn label_frequencies_within_multinomial_bounds() {
    let probs = [0.2, 0.5, 0.3];
    let design = MixtureDesign {
        probs: probs.to_vec(),
        ..MixtureDesign::standard(16, 1000, 123)
    };
    let (_, labels) = generate_mixture(&design).unwrap();
    for (k, &p) in probs.iter().enumerate() {
        let count = labels.iter().filter(|&&l| l == k + 1).count() as f64;
        let sd = (1000.0 * p * (1.0 - p)).sqrt();
        assert!((count - 1000.0 * p).abs() <= 3.0 * sd, "model {}: {count}", k + 1);
    }
    let one = MixtureDesign {
        probs: vec![1.0, 0.0, 0.0],
        ..MixtureDesign::standard(16, 50, 1)
    };
    assert!(generate_mixture(&one).unwrap().1.iter().all(|&l| l == 1));
}

/// Zeros of `1 - sum phi_k z^k` inside the unit disk, by the winding number
/// of the polynomial along the unit circle; `None` when a zero is too close
/// to the circle to decide.
fn zeros_inside(phi: [f64; 3]) -> Option<i64> {
    let steps = 8192;
    let eval = |t: f64| {
        let (mut re, mut im) = (1.0, 0.0);
        for (k, &p) in phi.iter().enumerate() {
            let a = (k + 1) as f64 * t;
            re -= p * a.cos();
            im -= p * a.sin();
        }
        (re, im)
    };
    let mut total = 0.0;
    let mut prev = eval(0.0);
    let mut min_mod = f64::INFINITY;
    for s in 1..=steps {
        let cur = eval(2.0 * PI * s as f64 / steps as f64);
        min_mod = min_mod.min(cur.0.hypot(cur.1));
        let mut d = cur.1.atan2(cur.0) - prev.1.atan2(prev.0);
        if d > PI {
            d -= 2.0 * PI;
        } else if d < -PI {
            d += 2.0 * PI;
        }
        total += d;
        prev = cur;
    }
    (min_mod > 1e-2).then(|| (total / (2.0 * PI)).round() as i64)
}

#[test]
fn stationarity_check_matches_root_location() {
    let mut rng = common::rng(51);
    let mut decided = 0;
    for _ in 0..2000 {
        let phi = [rng.random_range(-1.5..1.5), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let Some(inside) = zeros_inside(phi) else { continue };
        decided += 1;
        let stationary = inside == 0;
        assert_eq!(ArModel::new(phi, 1.0).is_ok(), stationary, "{phi:?}");
        assert_eq!(reflection_coefficients(phi).iter().all(|k| k.abs() < 1.0), stationary);
    }
    assert!(decided > 1500);
    for m in default_models() {
        assert_eq!(zeros_inside(m.phi()), Some(0));
    }
}

#[test]
fn long_periodogram_tracks_true_sdf() {
    let n = 1 << 14;
    for (s, model) in default_models().into_iter().enumerate() {
        let ts = TimeSeriesSet::from_columns(&[ar3_generate(&model, n, 600 + s as u64)]).unwrap();
        let ps = periodogram(&ts).unwrap();
        let f = true_sdf(&model, ps.grid());
        let mut dev: Vec<f64> = ps.ordinates().column(0).iter().zip(&f).map(|(i, f)| (i.ln() - f.ln()).abs()).collect();
        dev.sort_by(f64::total_cmp);
        assert!(dev[dev.len() / 2] <= 2.0);
    }
}

fn quick_config() -> StudyConfig {
    let mut config = StudyConfig {
        lambda: LambdaMode::Fixed { value: 1.0 },
        max_outer_iters: 100,
        ..StudyConfig::default()
    };
    config.basis.n_basis = 12;
    config
}

#[test]
fn single_model_design_is_excluded() {
    let config = StudyConfig {
        probs: Some(vec![1.0, 0.0, 0.0]),
        ..quick_config()
    };
    assert_eq!(run_once(100, 6, 3, &config).unwrap(), RunOutcome::Excluded);
    let report = run_study(&[(100, 6)], 2, 3, &config).unwrap();
    assert_eq!(report.cells[0].excluded, 2);
    assert!(report.cells[0].estimators.iter().all(|e| e.runs_ok == 0));
}

#[test]
fn study_is_reproducible() {
    let config = quick_config();
    let a = run_study(&[(100, 6), (128, 9)], 3, 2024, &config).unwrap();
    let b = run_study(&[(100, 6), (128, 9)], 3, 2024, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_csv(), b.to_csv());
    for cell in &a.cells {
        assert_eq!(cell.estimators.len(), 6);
        let nc = cell.summary(EstimatorKind::Ncsde).unwrap();
        assert_eq!(nc.runs_ok + nc.runs_failed + cell.excluded, 3);
        if nc.runs_ok >= 2 {
            assert!(nc.ari.se.is_finite());
        }
    }
    let c = run_study(&[(100, 6)], 3, 2025, &config).unwrap();
    assert_ne!(a.cells[0].seeds, c.cells[0].seeds);
    assert!(run_study(&[(100, 6)], 1, 1, &config).is_err());
}
