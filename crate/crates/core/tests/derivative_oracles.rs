use leakcheck_core::autograd::{sigmoid, Activation};
use leakcheck_core::derivatives::{
    finite_difference_oracle, gradients, materialize_jacobian, mixed_jvp, mixed_vjp, FdTarget,
    JacobianOperator, SecondOrder, DEFAULT_MATERIALIZE_BUDGET,
};
use leakcheck_core::models::{
    build_model, initialize_parameters, zoo, InitKind, InitScheme, Model, ModelSpec, ParameterSet,
};
use leakcheck_core::rng;
use leakcheck_core::tensor::{dot, norm, sub};
use leakcheck_core::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng as _;

fn rel(a: &[f64], b: &[f64]) -> f64 {
    norm(&sub(a, b)) / norm(b).max(1e-300)
}

fn small_zoo() -> Vec<(&'static str, ModelSpec)> {
    vec![
        ("linear_dot", zoo::linear_dot(5)),
        ("linear_classifier", zoo::linear_classifier(6, 3)),
        (
            "one_layer_sigmoid",
            zoo::one_layer(4, Activation::Sigmoid, 0.3),
        ),
        ("one_layer_tanh", zoo::one_layer(4, Activation::Tanh, -0.2)),
        ("mlp", zoo::mlp(5, &[4, 3], 3, Activation::Sigmoid)),
        (
            "lenet_small",
            zoo::lenet(&zoo::LeNetOptions {
                input_shape: vec![1, 8, 8],
                classes: 3,
                channels: 3,
                bias: true,
                ..Default::default()
            }),
        ),
    ]
}

fn sample(model: &Model, seed: u64) -> (Vec<f64>, usize) {
    let mut r = rng::seeded(seed);
    let x = (0..model.d_x()).map(|_| r.random::<f64>()).collect();
    let label = model.num_classes().map_or(0, |c| r.random_range(0..c));
    (x, label)
}

#[test]
fn gradients_match_central_differences() {
    for (name, spec) in small_zoo() {
        let model = build_model(spec).unwrap();
        for seed in 0..3 {
            let params = initialize_parameters(&model, InitScheme::new(InitKind::Uniform, seed));
            let (x, y) = sample(&model, 100 + seed);
            let g = gradients(&model, &params, &x, y).unwrap();
            let fd_t = finite_difference_oracle(&model, &params, &x, y, &FdTarget::GradTheta, 1e-3)
                .unwrap();
            let fd_x =
                finite_difference_oracle(&model, &params, &x, y, &FdTarget::GradX, 1e-3).unwrap();
            assert!(
                rel(&g.g_theta, &fd_t) < 1e-6,
                "{name}: {}",
                rel(&g.g_theta, &fd_t)
            );
            assert!(rel(&g.g_x, &fd_x) < 1e-6, "{name}: {}", rel(&g.g_x, &fd_x));
        }
    }
}

#[test]
fn mixed_jvp_matches_second_differences() {
    for (name, spec) in small_zoo() {
        let model = build_model(spec).unwrap();
        let params = initialize_parameters(&model, InitScheme::new(InitKind::Xavier, 4));
        let (x, y) = sample(&model, 8);
        let mut r = rng::seeded(9);
        let delta = rng::gaussian_vec(&mut r, model.d_theta());
        let jd = mixed_jvp(&model, &params, &x, y, &delta).unwrap();
        let fd =
            finite_difference_oracle(&model, &params, &x, y, &FdTarget::Jvp(delta), 1e-2).unwrap();
        assert!(rel(&jd, &fd) < 1e-5, "{name}: {}", rel(&jd, &fd));
    }
}

#[test]
fn one_layer_identity_jacobian_has_closed_form() {
    // L = 0.5 (theta.x - b)^2 gives J = theta x^T + (theta.x - b) I.
    let model = build_model(zoo::one_layer(3, Activation::Identity, 0.7)).unwrap();
    let theta = vec![0.4, -1.1, 0.25];
    let x = vec![0.9, 0.3, -0.6];
    let params = ParameterSet::new(&model, theta.clone()).unwrap();
    let mut op = SecondOrder::new(&model, &params, &x, 0).unwrap();
    let j = materialize_jacobian(&mut op, DEFAULT_MATERIALIZE_BUDGET).unwrap();
    let r = dot(&theta, &x) - 0.7;
    let expected = DMatrix::from_fn(3, 3, |i, k| theta[i] * x[k] + if i == k { r } else { 0.0 });
    assert!((j - expected).abs().max() < 1e-9);
}

#[test]
fn one_layer_sigmoid_jacobian_has_closed_form() {
    // grad_theta L = (s - b) s' x with s = sigmoid(a), a = theta.x, so
    // dJ[i][k] = (s'^2 + (s - b) s'') theta_i x_k + (s - b) s' [i == k].
    let b = 0.2;
    let model = build_model(zoo::one_layer(3, Activation::Sigmoid, b)).unwrap();
    let theta = vec![0.7, -0.4, 1.3];
    let x = vec![0.1, 0.5, 0.8];
    let params = ParameterSet::new(&model, theta.clone()).unwrap();
    let mut op = SecondOrder::new(&model, &params, &x, 0).unwrap();
    let j = materialize_jacobian(&mut op, DEFAULT_MATERIALIZE_BUDGET).unwrap();
    let s = sigmoid(dot(&theta, &x));
    let s1 = s * (1.0 - s);
    let s2 = s1 * (1.0 - 2.0 * s);
    let expected = DMatrix::from_fn(3, 3, |i, k| {
        (s1 * s1 + (s - b) * s2) * theta[i] * x[k] + if i == k { (s - b) * s1 } else { 0.0 }
    });
    assert!((j - expected).abs().max() < 1e-12);
}

#[test]
fn well_fit_one_layer_is_rank_one() {
    let model = build_model(zoo::one_layer(3, Activation::Identity, 0.0)).unwrap();
    let theta = vec![0.5, 0.2, -0.3];
    let mut x = vec![0.4, 0.1, 0.0];
    // Choose the last coordinate so that theta.x = b = 0 exactly.
    x[2] = (0.5 * 0.4 + 0.2 * 0.1) / 0.3;
    let params = ParameterSet::new(&model, theta).unwrap();
    let g = gradients(&model, &params, &x, 0).unwrap();
    assert!(norm(&g.g_theta) < 1e-15);
    let mut op = SecondOrder::new(&model, &params, &x, 0).unwrap();
    let j = materialize_jacobian(&mut op, DEFAULT_MATERIALIZE_BUDGET).unwrap();
    let sv = j.singular_values();
    let mut sv: Vec<f64> = sv.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    assert!(sv[0] > 0.1);
    assert!(sv[1] <= 1e-9, "{sv:?}");
}

#[test]
fn worked_two_by_two_jacobian_from_one_layer_model() {
    // theta = (2, 1), x = (1, 0), b = 0: J = theta x^T + 2 I = [[4, 0], [1, 2]].
    let model = build_model(zoo::one_layer(2, Activation::Identity, 0.0)).unwrap();
    let params = ParameterSet::new(&model, vec![2.0, 1.0]).unwrap();
    let mut op = SecondOrder::new(&model, &params, &[1.0, 0.0], 0).unwrap();
    let j = materialize_jacobian(&mut op, DEFAULT_MATERIALIZE_BUDGET).unwrap();
    assert_eq!(j, DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 1.0, 2.0]));
}

#[test]
fn materialization_refuses_over_budget() {
    let model = build_model(zoo::linear_classifier(50, 10)).unwrap();
    let params = initialize_parameters(&model, InitScheme::new(InitKind::Uniform, 0));
    let mut op = SecondOrder::new(&model, &params, &vec![0.5; 50], 1).unwrap();
    assert!(matches!(
        materialize_jacobian(&mut op, 1000),
        Err(Error::Budget {
            required: 25_000,
            budget: 1000
        })
    ));
}

#[test]
fn wrong_lengths_are_dimension_errors() {
    let model = build_model(zoo::linear_dot(3)).unwrap();
    let params = ParameterSet::new(&model, vec![1.0; 3]).unwrap();
    assert!(matches!(
        mixed_jvp(&model, &params, &[0.0; 3], 0, &[1.0; 2]),
        Err(Error::Dimension { .. })
    ));
    assert!(matches!(
        mixed_vjp(&model, &params, &[0.0; 3], 0, &[1.0; 4]),
        Err(Error::Dimension { .. })
    ));
    assert!(matches!(
        gradients(&model, &params, &[0.0; 2], 0),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn operator_state_updates_match_fresh_builds() {
    let model = build_model(zoo::mlp(4, &[3], 2, Activation::Tanh)).unwrap();
    let p1 = initialize_parameters(&model, InitScheme::new(InitKind::Uniform, 1));
    let p2 = initialize_parameters(&model, InitScheme::new(InitKind::Uniform, 2));
    let (x1, y1) = (vec![0.1, 0.2, 0.3, 0.4], 0);
    let (x2, y2) = (vec![0.9, 0.1, 0.5, 0.7], 1);
    let delta = vec![0.3; model.d_theta()];
    let mut op = SecondOrder::new(&model, &p1, &x1, y1).unwrap();
    op.jvp(&delta).unwrap();
    op.set_sample(&x2, y2).unwrap();
    op.set_params(p2.theta()).unwrap();
    let fresh = mixed_jvp(&model, &p2, &x2, y2, &delta).unwrap();
    assert_eq!(op.jvp(&delta).unwrap(), fresh);
    assert_eq!(
        op.gradients().unwrap(),
        gradients(&model, &p2, &x2, y2).unwrap()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adjoint_identity_holds(seed in 0u64..1_000_000, which in 0usize..6) {
        let (_, spec) = small_zoo().swap_remove(which);
        let model = build_model(spec).unwrap();
        let params = initialize_parameters(&model, InitScheme::new(InitKind::Uniform, seed));
        let (x, y) = sample(&model, seed ^ 0xabc);
        let mut r = rng::seeded(seed.wrapping_add(7));
        let delta = rng::gaussian_vec(&mut r, model.d_theta());
        let b = rng::gaussian_vec(&mut r, model.d_x());
        let mut op = SecondOrder::new(&model, &params, &x, y).unwrap();
        let lhs = dot(&b, &op.jvp(&delta).unwrap());
        let rhs = dot(&op.vjp(&b).unwrap(), &delta);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()).max(1.0));
    }

    #[test]
    fn jvp_is_linear_in_delta(seed in 0u64..1_000_000, a in -3.0f64..3.0) {
        let model = build_model(zoo::mlp(4, &[3], 2, Activation::Sigmoid)).unwrap();
        let params = initialize_parameters(&model, InitScheme::new(InitKind::Normal, seed));
        let mut op = SecondOrder::new(&model, &params, &[0.2, 0.4, 0.6, 0.8], 1).unwrap();
        let mut r = rng::seeded(seed);
        let d1 = rng::gaussian_vec(&mut r, model.d_theta());
        let d2 = rng::gaussian_vec(&mut r, model.d_theta());
        let comb: Vec<f64> = d1.iter().zip(&d2).map(|(p, q)| a * p + q).collect();
        let j1 = op.jvp(&d1).unwrap();
        let j2 = op.jvp(&d2).unwrap();
        let jc = op.jvp(&comb).unwrap();
        let expect: Vec<f64> = j1.iter().zip(&j2).map(|(p, q)| a * p + q).collect();
        prop_assert!(norm(&sub(&jc, &expect)) <= 1e-12 * norm(&expect).max(1.0));
    }
}
