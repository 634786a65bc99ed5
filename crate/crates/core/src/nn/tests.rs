use rand::Rng;

use super::*;
use crate::autodiff::{Activation, Tensor};
use crate::data::{Dataset, Split};
use crate::qsim::Encoding;
use crate::rng;
use crate::trig_weights::TrigWeightGenerator;
use crate::Error;

const MNIST: [usize; 3] = [1, 28, 28];

#[test]
fn fnn_and_wc_fnn_variable_counts() {
    let fnn = variable_count_report(&ModelSpec::fnn(MNIST, 5)).unwrap();
    assert_eq!(fnn.layers[0].variables, 784 * 16 + 16);
    assert_eq!(fnn.layer_ratio, None);
    let wc = ModelSpec::wc_fnn(MNIST, 5, 15, 5);
    let report = variable_count_report(&wc).unwrap();
    assert_eq!(report.layers[0].variables, 16 * 15 + 16);
    assert_eq!(report.layers[0].unconstrained, 784 * 16 + 16);
    assert_eq!(report.layer_ratio, Some(784.0 / 15.0));
    assert_eq!(format!("{:.2}", report.layer_ratio.unwrap()), "52.27");
    let model = Model::build(&wc, 0).unwrap();
    assert_eq!(model.params()[0].value.shape(), &[16, 15]);
    assert_eq!(model.n_variables(), report.total);
    assert_eq!(report.unconstrained_total, fnn.total);
}

#[test]
fn layer_ratio_edge_cases() {
    let spec = ModelSpec {
        hidden: vec![4],
        ..ModelSpec::wc_fnn([1, 1, 6], 2, 6, 3)
    };
    assert_eq!(variable_count_report(&spec).unwrap().layer_ratio, Some(1.0));
    let cifar = ModelSpec {
        conv: ConvSpec {
            filters: 12,
            ..ConvSpec::default()
        },
        ..ModelSpec::wc_cnn([3, 32, 32], 5, 20, 5)
    };
    let report = variable_count_report(&cifar).unwrap();
    assert_eq!(report.layer_ratio, Some(135.0));
    let default_cnn = variable_count_report(&ModelSpec::wc_cnn(MNIST, 5, 20, 5)).unwrap();
    assert_eq!(default_cnn.layer_ratio, Some(1352.0 / 20.0));
}

#[test]
fn capacity_and_config_errors() {
    match Model::build(&ModelSpec::wc_fnn(MNIST, 5, 10, 2), 0) {
        Err(Error::Capacity(msg)) => assert!(msg.contains("N >="), "{msg}"),
        other => panic!("{other:?}"),
    }
    let mut bad = ModelSpec::fnn(MNIST, 1);
    assert!(matches!(bad.validate(), Err(Error::Config(_))));
    bad.n_classes = 3;
    bad.combination = Some(Combination { n_angles: 15, r: 5 });
    assert!(matches!(bad.validate(), Err(Error::Config(_))));
    let no_combination = ModelSpec {
        combination: None,
        ..ModelSpec::wc_fnn(MNIST, 5, 15, 5)
    };
    assert!(matches!(no_combination.validate(), Err(Error::Config(_))));
    assert!(matches!(
        ModelSpec::hnn(Encoding::Angle, MNIST, 5, 2).validate(),
        Err(Error::Config(_))
    ));
    assert!(ModelSpec::hnn(Encoding::Amplitude, MNIST, 5, 2).validate().is_ok());
    assert!(matches!("mlp".parse::<Architecture>(), Err(Error::Config(_))));
    assert_eq!("wc_cnn".parse::<Architecture>().unwrap(), Architecture::WcCnn);
}

#[test]
fn hnn_angle_on_plane_uses_two_qubits() {
    let spec = ModelSpec::hnn(Encoding::Angle, [1, 1, 2], 2, 2);
    let report = variable_count_report(&spec).unwrap();
    assert_eq!(report.layers[0].kind, "circuit");
    assert_eq!(report.layers[0].variables, 8);
    assert_eq!(report.layers[1].variables, 2 * 2 + 2);
    let model = Model::build(&spec, 1).unwrap();
    assert_eq!(model.logits(&[0.2, -0.4, 0.9, 0.1], None).unwrap().len(), 4);
}

fn random_inputs(n: usize, len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, &[]);
    (0..n * len).map(|_| r.gen::<f64>()).collect()
}

#[test]
fn constrained_layer_equals_copied_dense_layer() {
    let wc_spec = ModelSpec::wc_fnn([1, 4, 4], 3, 8, 3);
    let wc = Model::build(&wc_spec, 4).unwrap();
    let mut dense = Model::build(&ModelSpec::fnn([1, 4, 4], 3), 9).unwrap();
    let generator = TrigWeightGenerator::new(8, 3, 16).unwrap();
    let w = generator.weights(wc.params()[0].value.data(), None).unwrap();
    let mut values: Vec<Tensor> = wc.params().iter().map(|p| p.value.clone()).collect();
    values[0] = Tensor::new(vec![16, 16], w).unwrap();
    dense.replace_params(values).unwrap();
    let x = random_inputs(5, 16, 2);
    assert_eq!(wc.logits(&x, None).unwrap(), dense.logits(&x, None).unwrap());
}

#[test]
fn end_to_end_angle_gradients_match_finite_differences() {
    let spec = ModelSpec {
        hidden: vec![2],
        ..ModelSpec::wc_fnn([1, 1, 4], 2, 6, 2)
    };
    let mut model = Model::build(&spec, 12).unwrap();
    assert_eq!(model.n_variables(), 20);
    let x = random_inputs(8, 4, 5);
    let labels = [0, 1, 1, 0, 1, 0, 0, 1];
    model.accumulate_gradients(&x, &labels).unwrap();
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad().unwrap().to_vec()).collect();
    let loss_at = |m: &Model| -> f64 {
        let logits = m.logits(&x, None).unwrap();
        logits
            .chunks(2)
            .zip(&labels)
            .map(|(row, &l)| {
                let lse = (row[0].exp() + row[1].exp()).ln();
                lse - row[l]
            })
            .sum::<f64>()
            / 8.0
    };
    let h = 1e-6;
    for pi in 0..model.params().len() {
        for j in 0..model.params()[pi].value.len() {
            let mut up = model.clone();
            up.params_mut()[pi].value.data_mut()[j] += h;
            let mut down = model.clone();
            down.params_mut()[pi].value.data_mut()[j] -= h;
            let fd = (loss_at(&up) - loss_at(&down)) / (2.0 * h);
            let a = analytic[pi][j];
            assert!((a - fd).abs() <= 1e-5 * a.abs().max(1e-3), "param {pi}[{j}]: {a} vs {fd}");
        }
    }
}

fn separable(n: usize, seed: u64, split: Split) -> Dataset {
    let mut r = rng::stream(seed, &[split as u64]);
    let mut x = Vec::new();
    let mut y = Vec::new();
    while y.len() < n {
        let p: [f64; 2] = [r.gen(), r.gen()];
        let margin = p[0] - p[1];
        if margin.abs() < 0.1 {
            continue;
        }
        x.extend_from_slice(&p);
        y.push(usize::from(margin > 0.0));
    }
    Dataset::new(Tensor::new(vec![n, 1, 1, 2], x).unwrap(), y, 2, split, "toy").unwrap()
}

#[test]
fn fnn_learns_separable_toy() {
    let (tr, te) = (separable(400, 1, Split::Train), separable(200, 1, Split::Test));
    let mut model = Model::build(&ModelSpec::fnn([1, 1, 2], 2), 3).unwrap();
    let config = TrainConfig {
        epochs: 30,
        lr: 0.01,
        ..TrainConfig::default()
    };
    let report = train(&mut model, &tr, &te, &config).unwrap();
    assert_eq!(report.epochs.len(), 30);
    assert!(report.accuracy >= 0.99, "{}", report.accuracy);
    let best = *report.best();
    assert!(report.epochs.iter().all(|e| e.test_loss >= best.test_loss));
    let eval = model.evaluate(&te, 0.0, 0).unwrap();
    assert_eq!(eval.loss, best.test_loss);
}

#[test]
fn zero_epochs_reports_untrained_model() {
    let (tr, te) = (separable(400, 2, Split::Train), separable(400, 2, Split::Test));
    let mut model = Model::build(&ModelSpec::fnn([1, 1, 2], 2), 0).unwrap();
    let report = train(&mut model, &tr, &te, &TrainConfig { epochs: 0, ..TrainConfig::default() }).unwrap();
    assert!(report.epochs.is_empty());
    assert_eq!(report.best_epoch, 0);
    assert!((report.accuracy - 0.5).abs() < 0.25);
}

#[test]
fn training_is_deterministic() {
    let (tr, te) = (separable(100, 3, Split::Train), separable(50, 3, Split::Test));
    let spec = ModelSpec {
        hidden: vec![4],
        ..ModelSpec::wc_fnn([1, 1, 2], 2, 4, 2)
    };
    let config = TrainConfig { epochs: 3, seed: 8, ..TrainConfig::default() };
    let run = || {
        let mut m = Model::build(&spec, 8).unwrap();
        train(&mut m, &tr, &te, &config).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.epochs, b.epochs);
    assert_eq!(a.checksum, b.checksum);
}

#[test]
fn logistic_regression_loss_non_increasing() {
    let (tr, te) = (separable(200, 4, Split::Train), separable(100, 4, Split::Test));
    let spec = ModelSpec {
        hidden: vec![],
        ..ModelSpec::fnn([1, 1, 2], 2)
    };
    let mut model = Model::build(&spec, 1).unwrap();
    let config = TrainConfig { epochs: 20, batch_size: 200, lr: 0.01, seed: 1 };
    let report = train(&mut model, &tr, &te, &config).unwrap();
    let mut prev = report.initial.train_loss;
    for e in &report.epochs {
        assert!(e.train_loss <= prev, "epoch {}", e.epoch);
        prev = e.train_loss;
    }
}

#[test]
fn divergence_reports_numeric_error() {
    let (tr, te) = (separable(64, 5, Split::Train), separable(32, 5, Split::Test));
    let mut model = Model::build(&ModelSpec::fnn([1, 1, 2], 2), 0).unwrap();
    let config = TrainConfig { epochs: 2, lr: f64::INFINITY, ..TrainConfig::default() };
    match train(&mut model, &tr, &te, &config) {
        Err(Error::Numeric(msg)) => assert!(msg.contains("epoch 1"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn training_rejects_empty_or_mismatched_data() {
    let tr = separable(10, 6, Split::Train);
    let mut model = Model::build(&ModelSpec::fnn([1, 1, 2], 3), 0).unwrap();
    assert!(matches!(
        train(&mut model, &tr, &tr, &TrainConfig::default()),
        Err(Error::Data(_))
    ));
}

#[test]
fn predict_dropout_rules() {
    let x = random_inputs(6, 16, 3);
    let fnn = Model::build(&ModelSpec::fnn([1, 4, 4], 3), 0).unwrap();
    assert!(matches!(fnn.predict(&x, 0.1, 0), Err(Error::Config(_))));
    assert_eq!(fnn.predict(&x, 0.0, 0).unwrap(), fnn.predict(&x, 0.0, 1).unwrap());
    let wc = Model::build(&ModelSpec::wc_fnn([1, 4, 4], 3, 8, 3), 0).unwrap();
    assert_eq!(wc.predict(&x, 0.0, 0).unwrap(), wc.predict(&x, 0.0, 5).unwrap());
    let all_dropped = wc.predict(&x, 1.0, 0).unwrap();
    assert_eq!(all_dropped.len(), 6);
    assert!(matches!(wc.predict(&x, 1.5, 0), Err(Error::Config(_))));
    let hnn = Model::build(&ModelSpec::hnn(Encoding::Angle, [1, 1, 2], 2, 2), 0).unwrap();
    assert_eq!(hnn.predict(&x[..4], 0.5, 3).unwrap(), hnn.predict(&x[..4], 0.5, 3).unwrap());
}

#[test]
fn full_dropout_sets_constrained_weights_to_one() {
    let spec = ModelSpec {
        hidden: vec![3],
        activation: Activation::Linear,
        ..ModelSpec::wc_fnn([1, 1, 4], 2, 5, 2)
    };
    let wc = Model::build(&spec, 2).unwrap();
    let mut twin = Model::build(&ModelSpec { combination: None, arch: Architecture::Fnn, ..spec.clone() }, 0).unwrap();
    let mut values: Vec<Tensor> = wc.params().iter().map(|p| p.value.clone()).collect();
    values[0] = Tensor::new(vec![3, 4], vec![1.0; 12]).unwrap();
    twin.replace_params(values).unwrap();
    let x = random_inputs(3, 4, 9);
    let draw = wc.dropout_draw(1.0, 0).unwrap();
    assert_eq!(wc.logits(&x, draw).unwrap(), twin.logits(&x, None).unwrap());
}

#[test]
fn cnn_variants_run_and_train_step() {
    for spec in [ModelSpec::cnn([1, 8, 8], 3), ModelSpec::wc_cnn([1, 8, 8], 3, 8, 3)] {
        let spec = ModelSpec {
            conv: ConvSpec { filters: 2, kernel: 3, pool: 2, fc: 5 },
            ..spec
        };
        let mut model = Model::build(&spec, 1).unwrap();
        let x = random_inputs(4, 64, 1);
        let loss = model.accumulate_gradients(&x, &[0, 1, 2, 0]).unwrap();
        assert!(loss.is_finite());
        assert!(model.params().iter().all(|p| p.grad().is_some()));
    }
}

#[test]
fn checkpoint_round_trip() {
    let model = Model::build(&ModelSpec::wc_cnn([1, 8, 8], 3, 9, 3), 7).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(&model, dir.path()).unwrap();
    assert!(dir.path().join("manifest.json").exists());
    let back = load_checkpoint(dir.path()).unwrap();
    let x = random_inputs(2, 64, 4);
    assert_eq!(model.logits(&x, None).unwrap(), back.logits(&x, None).unwrap());
    assert_eq!(parameter_checksum(model.params()), parameter_checksum(back.params()));
}
