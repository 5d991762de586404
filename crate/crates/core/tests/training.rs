use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikeprune_core::data::{Dataset, Sample};
use spikeprune_core::snn::{LayerSpec, Network, NetworkConfig, PoissonEncoder, Shape3};
use spikeprune_core::train::{
    balance_thresholds, evaluate, evaluate_ann, train_ann, train_snn, AnnTrainConfig,
    SnnTrainConfig, SnnTrainer,
};

fn separable(n: usize, seed: u64) -> Dataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|i| {
            let label = i % 2;
            let sign = if label == 0 { 1.0 } else { -1.0 };
            let image = (0..6)
                .map(|d| {
                    let base = if d < 3 { sign * 0.5 } else { 0.0 };
                    base + rng.random_range(-0.3..0.3)
                })
                .collect();
            Sample { id: i as u64, image, label }
        })
        .collect();
    Dataset::new(Shape3::flat(6), 2, samples).unwrap()
}

#[test]
fn logistic_layer_separates_linearly_separable_data() {
    let data = separable(200, 0);
    let cfg = NetworkConfig::new(Shape3::flat(6), vec![LayerSpec::linear(6, 2).non_spiking()]).unwrap();
    let mut net = Network::<f64>::init(cfg, 0).unwrap();
    let tc = AnnTrainConfig { epochs: 50, batch_size: 16, augment: None, ..Default::default() };
    train_ann(&mut net, &data, None, &tc).unwrap();
    assert!(evaluate_ann(&net, &data).unwrap().0 >= 0.99);
}

#[test]
fn zero_epochs_are_no_ops() {
    let data = separable(20, 1);
    let cfg = NetworkConfig::new(
        Shape3::flat(6),
        vec![LayerSpec::linear(6, 4), LayerSpec::linear(4, 2).non_spiking()],
    )
    .unwrap();
    let net = Network::<f64>::init(cfg, 1).unwrap();
    let mut a = net.clone();
    let log = train_ann(&mut a, &data, None, &AnnTrainConfig { epochs: 0, ..Default::default() }).unwrap();
    assert!(log.is_empty());
    assert_eq!(a, net);

    let mut s = net.clone();
    let th = balance_thresholds(&s, &data, 5, &PoissonEncoder::new(0), 99.9).unwrap();
    s.set_thresholds(th).unwrap();
    let before = s.clone();
    train_snn(&mut s, &data, None, 5, &SnnTrainConfig { epochs: 0, ..Default::default() }, |_, _| {}).unwrap();
    assert_eq!(s, before);
}

#[test]
fn zero_learning_rate_leaves_weights() {
    let data = separable(16, 2);
    let cfg = NetworkConfig::new(
        Shape3::flat(6),
        vec![LayerSpec::linear(6, 4), LayerSpec::linear(4, 2).non_spiking()],
    )
    .unwrap();
    let mut net = Network::<f64>::init(cfg, 2).unwrap();
    let th = balance_thresholds(&net, &data, 5, &PoissonEncoder::new(0), 99.9).unwrap();
    net.set_thresholds(th).unwrap();
    let before = net.clone();
    let mut tr = SnnTrainer::new(&net, SnnTrainConfig { lr: 0.0, weight_decay: 0.0, ..Default::default() }).unwrap();
    let batch: Vec<_> = data.samples.iter().collect();
    tr.step(&mut net, &batch, 5).unwrap();
    assert_eq!(net, before);
}

#[test]
fn snn_memorizes_a_single_sample() {
    let data = separable(1, 3);
    let cfg = NetworkConfig::new(
        Shape3::flat(6),
        vec![LayerSpec::linear(6, 8), LayerSpec::linear(8, 2).non_spiking()],
    )
    .unwrap();
    let mut net = Network::<f64>::init(cfg, 3).unwrap();
    // start from the wrong answer
    let enc = PoissonEncoder::new(0);
    let th = balance_thresholds(&net, &data, 8, &enc, 99.9).unwrap();
    net.set_thresholds(th).unwrap();
    let cfg = SnnTrainConfig { lr: 1e-2, epochs: 60, batch_size: 1, ..Default::default() };
    let log = train_snn(&mut net, &data, Some(&data), 8, &cfg, |_, _| {}).unwrap();
    assert_eq!(log.last().unwrap().accuracy, 1.0);
    assert_eq!(evaluate(&net, &data, 8, &enc).unwrap().accuracy, 1.0);
}

#[test]
fn snn_training_is_deterministic() {
    let data = separable(40, 4);
    let cfg = NetworkConfig::new(
        Shape3::flat(6),
        vec![LayerSpec::linear(6, 8), LayerSpec::dropout(0.2), LayerSpec::linear(8, 2).non_spiking()],
    )
    .unwrap();
    let mut net = Network::<f64>::init(cfg, 4).unwrap();
    let th = balance_thresholds(&net, &data, 6, &PoissonEncoder::new(1), 99.9).unwrap();
    net.set_thresholds(th).unwrap();
    let tc = SnnTrainConfig { lr: 1e-3, epochs: 2, batch_size: 8, ..Default::default() };
    let mut a = net.clone();
    let mut b = net.clone();
    let la = train_snn(&mut a, &data, Some(&data), 6, &tc, |_, _| {}).unwrap();
    let lb = train_snn(&mut b, &data, Some(&data), 6, &tc, |_, _| {}).unwrap();
    assert_eq!(a, b);
    assert_eq!(la, lb);
}
