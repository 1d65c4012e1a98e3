mod common;

use nilm_core::features::{extract_matrix, Extractor, FeatureMatrix};
use nilm_core::ingest::{generate_dataset, synthetic_catalogue};
use nilm_core::nn::{
    build_ae, build_cnn, derive_cnn_architecture, encode, predict_cnn, train_network, Architecture, ChannelSchedule,
    Layer, LossKind, NetConfig, Network, OptimizerKind, Samples, Tensor,
};
use nilm_core::transform::{apply, fit_maxabs_norm};
use nilm_core::{domain::make_context, Rng};

#[test]
fn every_layer_passes_gradient_check() {
    for seed in 0..20 {
        for (name, err) in common::layer_cases(seed) {
            assert!(err < 1e-4, "seed {seed} {name}: relative error {err:e}");
        }
    }
}

#[test]
fn whole_network_gradient_matches_finite_differences() {
    let ctx = make_context(400, 50, 0.04).unwrap();
    let cfg = NetConfig { channels: ChannelSchedule { start: 2, cap: 3 }, ..NetConfig::default() };
    let mut rng = Rng::new(5);
    let mut net = build_cnn(&ctx, &derive_cnn_architecture(&ctx), 3, &cfg, &mut rng).unwrap();
    let x = common::random_tensor(&mut rng, 4, 1, ctx.samples_per_segment());
    let labels = [0, 2, 1, 2];
    let loss = |net: &mut Network| {
        let out = net.forward_train(&x);
        nilm_core::nn::cross_entropy_loss(&out, &labels).0
    };
    let out = net.forward_train(&x);
    let (_, g) = nilm_core::nn::cross_entropy_loss(&out, &labels);
    net.zero_grad();
    net.backward(&g);
    let analytic: Vec<f64> = net.params().iter().flat_map(|p| p.grad.clone()).collect();
    let mut numeric = Vec::new();
    let n_params = net.params().len();
    for k in 0..n_params {
        for i in 0..net.params()[k].value.len() {
            let orig = net.params()[k].value[i];
            net.params_mut()[k].value[i] = orig + common::STEP;
            let up = loss(&mut net);
            net.params_mut()[k].value[i] = orig - common::STEP;
            let down = loss(&mut net);
            net.params_mut()[k].value[i] = orig;
            numeric.push((up - down) / (2.0 * common::STEP));
        }
    }
    let err = common::relative_error(&analytic, &numeric);
    assert!(err < 1e-4, "relative error {err:e}");
}

#[test]
fn batch_norm_inference_is_a_fixed_map() {
    let ctx = make_context(400, 50, 0.04).unwrap();
    let mut rng = Rng::new(1);
    let mut net = build_cnn(&ctx, &derive_cnn_architecture(&ctx), 3, &NetConfig::default(), &mut rng).unwrap();
    let x = common::random_tensor(&mut rng, 5, 1, 16);
    net.forward_train(&x);
    let a = net.infer(&x);
    let b = net.infer(&x);
    assert_eq!(a, b);
    // A single sample gives the same result as inside a batch.
    let first = Tensor::from_vec(x.sample(0).to_vec(), 1, 1, 16).unwrap();
    let single = net.infer(&first);
    for (p, q) in single.data.iter().zip(a.sample(0)) {
        assert!((p - q).abs() < 1e-12);
    }
}

#[test]
fn softmax_rows_are_distributions() {
    let ctx = make_context(2000, 50, 0.1).unwrap();
    let mut rng = Rng::new(2);
    let net = build_cnn(&ctx, &derive_cnn_architecture(&ctx), 4, &NetConfig::default(), &mut rng).unwrap();
    let rows: Vec<Vec<f64>> = (0..7).map(|_| (0..200).map(|_| 3.0 * rng.normal()).collect()).collect();
    let m = FeatureMatrix::from_rows(&rows).unwrap();
    let probs = net.predict_matrix(&m).unwrap();
    assert_eq!(probs.len(), 7);
    for p in probs {
        assert_eq!(p.len(), 4);
        assert!(p.iter().all(|v| *v >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn uniform_logits_predict_class_zero() {
    let ctx = make_context(2000, 50, 0.1).unwrap();
    let mut net = build_cnn(&ctx, &derive_cnn_architecture(&ctx), 3, &NetConfig::default(), &mut Rng::new(3)).unwrap();
    if let Some(Layer::Dense(d)) = net.layers_mut().last_mut() {
        d.weight.value.iter_mut().for_each(|w| *w = 0.0);
        d.bias.value = vec![0.7; 3];
    }
    let m = FeatureMatrix::from_rows(&[vec![1.0; 200], vec![-2.0; 200]]).unwrap();
    assert_eq!(predict_cnn(&net, &m).unwrap(), vec![0, 0]);
    let wrong = FeatureMatrix::from_rows(&[vec![1.0; 199]]).unwrap();
    assert!(predict_cnn(&net, &wrong).is_err());
}

#[test]
fn ae_learns_a_repeated_vector() {
    let mut rng = Rng::new(4);
    let v: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin()).collect();
    let m = FeatureMatrix::from_rows(&vec![v; 8]).unwrap();
    let cfg = NetConfig {
        architecture: Architecture::Ae,
        factors: vec![2.0, 2.0],
        learning_rate: 0.01,
        batch_size: 8,
        optimizer: OptimizerKind::Adam,
        loss: LossKind::Mse,
        epochs: 500,
        patience: 500,
        ..NetConfig::default()
    };
    let net = build_ae(20, &cfg.factors, &cfg, &mut rng).unwrap();
    let (net, history) = train_network(net, Samples::reconstruction(&m), Samples::reconstruction(&m), &cfg, &mut rng).unwrap();
    let best = history.val_loss[history.best_epoch];
    assert!(best < 1e-3, "reconstruction mse {best}");
    let codes = encode(&net, &m).unwrap();
    assert_eq!(codes.n_cols(), 5);
    assert!(codes.rows().all(|r| r == codes.row(0)));
    assert_eq!(encode(&net, &m).unwrap(), codes);
}

fn small_dataset(per_class: usize, seed: u64) -> FeatureMatrix {
    let ctx = make_context(2000, 50, 0.1).unwrap();
    let sigs = synthetic_catalogue(3);
    let ds = generate_dataset(&sigs, per_class, &ctx, &Rng::new(seed)).unwrap();
    let raw = extract_matrix(&ds, &Extractor::RawWaveform { with_voltage: false }).unwrap();
    apply(&fit_maxabs_norm(&raw).unwrap(), &raw).unwrap()
}

#[test]
fn patience_zero_stops_at_first_non_improvement() {
    let train = small_dataset(10, 1);
    let val = small_dataset(4, 2);
    let cfg = NetConfig { learning_rate: 0.2, epochs: 60, patience: 0, ..NetConfig::preset("desk-cnn").unwrap() };
    let ctx = make_context(2000, 50, 0.1).unwrap();
    let mut rng = Rng::new(9);
    let net = build_cnn(&ctx, &derive_cnn_architecture(&ctx), 3, &cfg, &mut rng).unwrap();
    let (_, h) = train_network(net, Samples::classes(&train), Samples::classes(&val), &cfg, &mut rng).unwrap();
    let v = &h.val_loss;
    assert!(v.windows(2).take(v.len().saturating_sub(2)).all(|w| w[1] < w[0]));
    if v.len() < cfg.epochs {
        assert!(v[v.len() - 1] >= v[v.len() - 2]);
        assert_eq!(h.best_epoch, v.len() - 2);
    }
}

#[test]
fn cnn_fits_three_separable_classes() {
    let train = small_dataset(20, 3);
    let cfg = NetConfig { epochs: 30, ..NetConfig::preset("desk-cnn").unwrap() };
    let ctx = make_context(2000, 50, 0.1).unwrap();
    let mut rng = Rng::new(10);
    let net = build_cnn(&ctx, &derive_cnn_architecture(&ctx), 3, &cfg, &mut rng).unwrap();
    let (net, _) = train_network(net, Samples::classes(&train), Samples::classes(&train), &cfg, &mut rng).unwrap();
    let pred = predict_cnn(&net, &train).unwrap();
    let correct = pred.iter().zip(train.labels()).filter(|(a, b)| a == b).count();
    assert!(correct as f64 >= 0.95 * train.n_rows() as f64, "{correct}/{}", train.n_rows());
}

#[test]
fn training_is_seed_deterministic() {
    let train = small_dataset(6, 4);
    let cfg = NetConfig { epochs: 3, ..NetConfig::preset("desk-cnn").unwrap() };
    let ctx = make_context(2000, 50, 0.1).unwrap();
    let run = || {
        let mut rng = Rng::new(11);
        let net = build_cnn(&ctx, &derive_cnn_architecture(&ctx), 3, &cfg, &mut rng).unwrap();
        train_network(net, Samples::classes(&train), Samples::classes(&train), &cfg, &mut rng).unwrap()
    };
    let (a, ha) = run();
    let (b, hb) = run();
    assert_eq!(ha, hb);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn network_serde_round_trip_preserves_outputs() {
    let train = small_dataset(3, 5);
    let ctx = make_context(2000, 50, 0.1).unwrap();
    let net = build_cnn(&ctx, &derive_cnn_architecture(&ctx), 3, &NetConfig::default(), &mut Rng::new(6)).unwrap();
    let text = serde_json::to_string(&net).unwrap();
    let back: Network = serde_json::from_str(&text).unwrap();
    assert_eq!(net.predict_matrix(&train).unwrap(), back.predict_matrix(&train).unwrap());
}

#[test]
fn mismatched_loss_is_rejected() {
    let m = FeatureMatrix::from_rows(&[vec![0.0; 4], vec![1.0; 4]]).unwrap();
    let cfg = NetConfig { architecture: Architecture::Ae, factors: vec![2.0], loss: LossKind::Mse, ..NetConfig::default() };
    let net = build_ae(4, &[2.0], &cfg, &mut Rng::new(0)).unwrap();
    let cnn_cfg = NetConfig::default();
    assert!(train_network(net, Samples::classes(&m), Samples::classes(&m), &cnn_cfg, &mut Rng::new(0)).is_err());
}
