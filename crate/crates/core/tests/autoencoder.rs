mod common;

use perceptloco::perception::autoencoder::{fit, EncoderNetwork, TrainingConfig, LATENT_DIM};
use perceptloco::perception::dataset::{generate_dataset, validate_training_set};
use perceptloco::perception::HeightmapFrame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn frames(n: usize, seed: u64) -> Vec<HeightmapFrame> {
    generate_dataset(n, seed).unwrap().into_iter().map(|d| d.frame).collect()
}

#[test]
fn naive_difference_oracle_agrees_with_difference_propagation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data = frames(32, 1);
    let mut net = EncoderNetwork::random(&mut rng);
    net.fit_normalization(&data).unwrap();
    let pass = net.forward(&data[0]).unwrap();
    for _ in 0..50 {
        let i = rng.random_range(0..net.num_parameters());
        let h = 1e-3;
        let p = net.parameter(i);
        net.set_parameter(i, p + h);
        let naive = net.loss(&data[0]).unwrap() - pass.loss;
        net.set_parameter(i, p);
        let propagated = common::loss_delta(&net, &pass, i, h);
        assert!((naive - propagated).abs() < 1e-12 + 1e-6 * naive.abs(), "{naive} vs {propagated}");
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let data = frames(32, 2);
    let mut net = EncoderNetwork::random(&mut rng);
    net.fit_normalization(&data).unwrap();
    let (pass, g) = net.backward(&data[5]).unwrap();
    let err = common::max_gradient_error(&net, &pass, &g.flatten(), 7);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn training_on_generated_frames() {
    let dataset = generate_dataset(1000, 3).unwrap();
    validate_training_set(&dataset, 1000).unwrap();
    let data: Vec<HeightmapFrame> = dataset.into_iter().map(|d| d.frame).collect();
    let cfg = TrainingConfig { epochs: 12, ..Default::default() };
    let (net, report) = fit(&data, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert!(report.final_validation() <= 0.2 * report.baseline_validation(), "{report:?}");
    for w in report.train_curve.windows(2) {
        assert!(w[1] <= 1.05 * w[0], "{:?}", report.train_curve);
    }
    let a = net.encode(&data[0]).unwrap();
    let b = net.encode(&data[0]).unwrap();
    assert_eq!(a.len(), LATENT_DIM);
    assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
}
