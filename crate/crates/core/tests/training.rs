use leakcheck_core::autograd::Activation;
use leakcheck_core::data::{synthetic_samples, Sample, SyntheticKind};
use leakcheck_core::models::{
    build_model, forward_loss, initialize_parameters, train_model, zoo, InitKind, InitScheme,
    Layer, LossKind, ModelSpec, ParameterSet, TrainConfig,
};
use leakcheck_core::Error;

fn accuracy(spec: &ModelSpec, params: &ParameterSet, data: &[Sample]) -> f64 {
    // Arg-max of the logits, computed by hand for a bias-free linear layer.
    let Layer::Linear {
        in_features,
        out_features,
        ..
    } = spec.layers[0]
    else {
        unreachable!()
    };
    let w = params.theta();
    let correct = data
        .iter()
        .filter(|s| {
            let logits: Vec<f64> = (0..out_features)
                .map(|o| {
                    (0..in_features)
                        .map(|i| w[o * in_features + i] * s.x[i])
                        .sum()
                })
                .collect();
            let best = (0..out_features)
                .max_by(|&a, &b| logits[a].total_cmp(&logits[b]))
                .unwrap();
            best == s.label
        })
        .count();
    correct as f64 / data.len() as f64
}

#[test]
fn separable_data_is_fit_perfectly() {
    let ds =
        synthetic_samples(&SyntheticKind::Separable2class { margin: 0.5 }, 60, &[8], 4).unwrap();
    let spec = zoo::linear_classifier(8, 2);
    let model = build_model(spec.clone()).unwrap();
    let init = initialize_parameters(&model, InitScheme::new(InitKind::Uniform, 3));
    let out = train_model(
        &model,
        &init,
        &ds.samples,
        &TrainConfig {
            epochs: 50,
            learning_rate: 0.1,
            seed: 1,
        },
    )
    .unwrap();
    assert_eq!(out.snapshots.len(), 51);
    let mean_loss = |p: &ParameterSet| {
        ds.samples
            .iter()
            .map(|s| forward_loss(&model, p, &s.x, s.label).unwrap())
            .sum::<f64>()
            / ds.len() as f64
    };
    assert!(mean_loss(out.final_params()) < mean_loss(&init));
    assert_eq!(accuracy(&spec, out.final_params(), &ds.samples), 1.0);
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let ds = synthetic_samples(
        &SyntheticKind::GaussianBlobs {
            classes: 3,
            spread: 0.1,
        },
        9,
        &[4],
        0,
    )
    .unwrap();
    let model = build_model(zoo::mlp(4, &[3], 3, Activation::Sigmoid)).unwrap();
    let init = initialize_parameters(&model, InitScheme::new(InitKind::Kaiming, 0));
    let out = train_model(
        &model,
        &init,
        &ds.samples,
        &TrainConfig {
            epochs: 3,
            learning_rate: 0.0,
            seed: 0,
        },
    )
    .unwrap();
    assert!(out.snapshots.iter().all(|p| p == &init));
}

#[test]
fn training_is_bit_identical_per_seed() {
    let ds = synthetic_samples(&SyntheticKind::Checkerboard { cells: 2 }, 20, &[2], 5).unwrap();
    let model = build_model(zoo::mlp(2, &[4], 2, Activation::Tanh)).unwrap();
    let init = initialize_parameters(&model, InitScheme::new(InitKind::Xavier, 2));
    let cfg = TrainConfig {
        epochs: 4,
        learning_rate: 0.05,
        seed: 8,
    };
    let a = train_model(&model, &init, &ds.samples, &cfg).unwrap();
    let b = train_model(&model, &init, &ds.samples, &cfg).unwrap();
    assert_eq!(a.snapshots, b.snapshots);
    let c = train_model(&model, &init, &ds.samples, &TrainConfig { seed: 9, ..cfg }).unwrap();
    assert_ne!(a.snapshots.last(), c.snapshots.last());
}

#[test]
fn divergence_reports_the_epoch() {
    let model = build_model(ModelSpec {
        input_shape: vec![2],
        layers: vec![Layer::Linear {
            in_features: 2,
            out_features: 1,
            bias: false,
        }],
        loss: LossKind::SquaredError { target: vec![0.0] },
    })
    .unwrap();
    let init = ParameterSet::new(&model, vec![1.0, 1.0]).unwrap();
    let data = vec![Sample {
        x: vec![1.0, 1.0],
        label: 0,
        source: "s".into(),
    }];
    let r = train_model(
        &model,
        &init,
        &data,
        &TrainConfig {
            epochs: 5000,
            learning_rate: 10.0,
            seed: 0,
        },
    );
    assert!(matches!(r, Err(Error::Diverged { .. })), "{r:?}");
}

#[test]
fn non_finite_layer_is_named() {
    let model = build_model(zoo::mlp(2, &[2], 2, Activation::Relu)).unwrap();
    let mut theta = vec![1e308; 4];
    theta.extend([1e308; 4]);
    let params = ParameterSet::new(&model, theta).unwrap();
    let err = forward_loss(&model, &params, &[1.0, 1.0], 0).unwrap_err();
    match err {
        Error::NonFinite { layer } => assert!(layer.starts_with("0:linear"), "{layer}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn bad_labels_and_lengths_are_rejected() {
    let model = build_model(zoo::linear_classifier(3, 2)).unwrap();
    let params = initialize_parameters(&model, InitScheme::new(InitKind::Uniform, 0));
    assert!(matches!(
        forward_loss(&model, &params, &[0.0; 3], 2),
        Err(Error::Label {
            label: 2,
            classes: 2
        })
    ));
    assert!(matches!(
        ParameterSet::new(&model, vec![0.0; 5]),
        Err(Error::Dimension { .. })
    ));
}
