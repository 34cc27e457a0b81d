mod support;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use support::checks;
use tree_alime::neuralnet::Loss;
use tree_alime::surrogate::logistic_objective;

const H: f64 = 1e-6;

#[test]
fn classifier_bce_gradients() {
    let worst = checks::network_gradient_error(&checks::CLASSIFIER_DIMS, &checks::CLASSIFIER_ACTS, Loss::Bce, 150, 1);
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn autoencoder_mse_gradients() {
    let worst = checks::network_gradient_error(&checks::AUTOENCODER_DIMS, &checks::AUTOENCODER_ACTS, Loss::Mse, 150, 2);
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn logistic_objective_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let n = rng.random_range(2..20);
        let k = rng.random_range(1..5);
        let x = Array2::from_shape_simple_fn((n, k), || rng.sample(StandardNormal));
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let theta: Vec<f64> = (0..=k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let l2 = rng.random_range(0.0..0.5);
        let (_, grad) = logistic_objective(&x, &y, &w, l2, &theta[..k], theta[k]).unwrap();
        let numeric = support::central_differences(&theta, H, |t| {
            logistic_objective(&x, &y, &w, l2, &t[..k], t[k]).unwrap().0
        });
        let err = support::max_relative_error(&grad, &numeric, 1e-6);
        assert!(err < 1e-5, "relative error {err:e}");
    }
}
