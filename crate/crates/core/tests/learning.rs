mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use terrasim::config::TrainingConfig;
use terrasim::predictor::{numerical_gradient_check, stlsq, Activation, PredictorNet};

use common::synthetic;

#[test]
fn stlsq_recovers_support() {
    let cfg = TrainingConfig::default();
    let start = Instant::now();
    let mut exact = 0;
    for seed in 0..100 {
        let (x, y, truth) = synthetic(seed);
        let mask = stlsq(&x, &y, cfg.stlsq_threshold, cfg.ridge).unwrap();
        if mask == truth {
            exact += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    println!("exact support in {exact}/100 trials, {elapsed:.3} s");
    assert!(exact >= 95);
    assert!(elapsed < 10.0);
}

#[test]
fn gradient_check_full_size_tanh() {
    let layout: Vec<String> = (0..15).map(|i| format!("f{i}")).collect();
    let net = PredictorNet::init(layout, Activation::Tanh, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let z: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
    let target: [f64; 6] = std::array::from_fn(|_| rng.random_range(-0.5..0.5));
    let err = numerical_gradient_check(&net, &z, &target).unwrap();
    println!("max relative gradient error {err:e}");
    assert!(err < 1e-4);
}
