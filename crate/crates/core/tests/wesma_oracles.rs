mod common;

use ndarray::{Array1, Array2};
use wesma::wesma::{augment, fit_mda_layer, marginalized_moments, stack_fit, CorruptionProfile, ReprMode, WesmaModel};

#[test]
fn moments_match_explicit_corruption() {
    let x = common::positive_matrix(5, 3, 5);
    let profile = CorruptionProfile::uniform(3, 0.3).unwrap();
    let err = common::moments_monte_carlo(&x, &profile, 100_000, 6);
    assert!(err < 0.02, "relative error {err}");
}

#[test]
fn moments_with_nonuniform_profile() {
    let x = common::positive_matrix(8, 4, 6);
    let profile = CorruptionProfile::from_features(vec![0.9, 0.4, 0.75, 1.0]).unwrap();
    let err = common::moments_monte_carlo(&x, &profile, 100_000, 9);
    assert!(err < 0.02, "relative error {err}");
}

#[test]
fn layer_matches_explicit_ridge_regression() {
    let x = common::gaussian_matrix(21, 5, 40);
    let profile = CorruptionProfile::uniform(5, 0.3).unwrap();
    let diff = common::layer_monte_carlo(&x, &profile, 1e-3, 50_000, 22);
    assert!(diff < 0.05, "max abs diff {diff}");
}

fn residual_ratio(x: &Array2<f64>, profile: &CorruptionProfile, lambda: f64) -> f64 {
    let layer = fit_mda_layer(x, profile, lambda).unwrap();
    let (p, mut q) = marginalized_moments(x, profile).unwrap();
    for i in 0..q.nrows() {
        q[[i, i]] += lambda;
    }
    let r = layer.weights.dot(&q) - &p;
    let norm = |m: &Array2<f64>| m.iter().map(|v| v * v).sum::<f64>().sqrt();
    norm(&r) / norm(&p)
}

#[test]
fn solver_residual_contract() {
    for (seed, d, n, p, lambda) in [(1, 6, 30, 0.2, 1e-3), (2, 12, 8, 0.5, 1e-2), (3, 20, 100, 0.1, 1.0)] {
        let x = common::gaussian_matrix(seed, d, n);
        let profile = CorruptionProfile::uniform(d, p).unwrap();
        let ratio = residual_ratio(&x, &profile, lambda);
        assert!(ratio <= 1e-6, "seed {seed}: residual ratio {ratio}");
    }
}

#[test]
fn identity_at_zero_corruption() {
    let x = common::gaussian_matrix(4, 6, 30);
    let layer = fit_mda_layer(&x, &CorruptionProfile::uniform(6, 0.0).unwrap(), 1e-9).unwrap();
    for i in 0..6 {
        for j in 0..7 {
            let expected = if i == j { 1.0 } else { 0.0 };
            assert!((layer.weights[[i, j]] - expected).abs() < 1e-6);
        }
    }
    let model = stack_fit(&x, &CorruptionProfile::uniform(6, 0.0).unwrap(), 1, 1e-9, ReprMode::Concat).unwrap();
    for c in 0..30 {
        let col: Vec<f64> = x.column(c).to_vec();
        assert!(model.reconstruction_error(&col).unwrap() < 1e-8);
    }
}

#[test]
fn far_outlier_scores_above_every_inlier() {
    let inliers = common::gaussian_matrix(31, 8, 120);
    let profile = CorruptionProfile::uniform(8, 0.3).unwrap();
    let model = stack_fit(&inliers, &profile, 2, 1e-2, ReprMode::Concat).unwrap();
    let max_inlier = model
        .reconstruction_error_batch(&inliers)
        .unwrap()
        .into_iter()
        .fold(0.0, f64::max);
    // 10 standard deviations along a direction the inliers never take
    let outlier: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 10.0 } else { -10.0 }).collect();
    let score = model.reconstruction_error(&outlier).unwrap();
    assert!(score > max_inlier, "outlier {score} vs max inlier {max_inlier}");
}

#[test]
fn three_layer_stack_is_deterministic_and_bounded() {
    let x = common::gaussian_matrix(41, 7, 50);
    let profile = CorruptionProfile::uniform(7, 0.4).unwrap();
    let a = stack_fit(&x, &profile, 3, 1e-3, ReprMode::Concat).unwrap();
    let b = stack_fit(&x, &profile, 3, 1e-3, ReprMode::Concat).unwrap();
    assert_eq!(a, b);
    let repr = a.transform_batch(&x).unwrap();
    assert_eq!(repr.nrows(), 7 * 4);
    for v in repr.slice(ndarray::s![7.., ..]).iter() {
        assert!(v.abs() < 1.0);
    }
    assert!(a.layers.iter().all(|l| l.weights.iter().all(|w| w.is_finite())));
}

#[test]
fn representation_modes() {
    let x = common::gaussian_matrix(51, 5, 25);
    let profile = CorruptionProfile::uniform(5, 0.2).unwrap();
    let concat = stack_fit(&x, &profile, 2, 1e-3, ReprMode::Concat).unwrap();
    let last = WesmaModel { repr_mode: ReprMode::Last, ..concat.clone() };
    let col: Vec<f64> = x.column(3).to_vec();
    let c = concat.transform(&col).unwrap();
    let l = last.transform(&col).unwrap();
    assert_eq!(c.len(), 15);
    assert_eq!(l.len(), 5);
    assert_eq!(&c[..5], &col[..]);
    assert_eq!(&c[10..], &l[..]);
    // manual forward pass
    let h1 = concat.layers[0].weights.dot(&augment(&x.column(3).to_owned().insert_axis(ndarray::Axis(1))));
    let h1: Array1<f64> = h1.column(0).mapv(f64::tanh);
    for (a, b) in c[5..10].iter().zip(h1.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(concat.transform(&[1.0, 2.0]).is_err());
}

#[test]
fn model_json_reload_scores_identically() {
    let x = common::gaussian_matrix(61, 6, 30);
    let profile = CorruptionProfile::uniform(6, 0.25).unwrap();
    let model = stack_fit(&x, &profile, 2, 1e-3, ReprMode::Last).unwrap();
    let back = WesmaModel::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(back, model);
    assert_eq!(
        back.reconstruction_error_batch(&x).unwrap(),
        model.reconstruction_error_batch(&x).unwrap()
    );
}
