use resgen_nn::{Adam, NnError, Param, Tensor};

fn param(values: &[f32]) -> Param {
    Param {
        name: "w".into(),
        tensor: Tensor::new(&[values.len()], values.to_vec()).unwrap(),
    }
}

#[test]
fn zero_gradient_leaves_weights_and_counts_step() {
    let mut p = vec![param(&[0.5, -1.5])];
    let mut opt = Adam::new(1e-3);
    opt.step(&mut p, &[Tensor::zeros(&[2])]).unwrap();
    assert_eq!(p[0].tensor.data(), &[0.5, -1.5]);
    assert_eq!(opt.step_count(), 1);
}

#[test]
fn first_step_moves_by_learning_rate() {
    let mut p = vec![param(&[0.0])];
    let mut opt = Adam::new(1e-3);
    opt.step(&mut p, &[Tensor::ones(&[1])]).unwrap();
    // m̂ = v̂ = 1, so Δw = −lr · 1 / (1 + eps).
    let expected = -1e-3 / (1.0 + 1e-7);
    assert!((p[0].tensor.data()[0] as f64 - expected).abs() < 1e-9);
}

#[test]
fn clipping_rescales_to_the_clip_norm() {
    let grads = [Tensor::new(&[2], vec![6.0, 8.0]).unwrap()];
    let scaled = [Tensor::new(&[2], vec![0.6, 0.8]).unwrap()];
    let mut a = vec![param(&[1.0, 2.0])];
    let mut b = a.clone();
    let mut clipped = Adam::new(0.1).with_clip_norm(1.0);
    let mut plain = Adam::new(0.1);
    for _ in 0..3 {
        clipped.step(&mut a, &grads).unwrap();
        plain.step(&mut b, &scaled).unwrap();
    }
    assert_eq!(a, b);
}

#[test]
fn nan_gradient_is_reported_by_name_and_nothing_changes() {
    let mut p = vec![param(&[1.0]), Param { name: "decoder.bias".into(), tensor: Tensor::zeros(&[1]) }];
    let mut opt = Adam::new(1e-3);
    let grads = [Tensor::ones(&[1]), Tensor::new(&[1], vec![f32::NAN]).unwrap()];
    match opt.step(&mut p, &grads) {
        Err(NnError::NonFiniteGradient(name)) => assert_eq!(name, "decoder.bias"),
        other => panic!("{other:?}"),
    }
    assert_eq!(p[0].tensor.data(), &[1.0]);
    assert_eq!(opt.step_count(), 0);
}

#[test]
fn mismatched_gradient_count_is_rejected() {
    let mut p = vec![param(&[1.0])];
    let mut opt = Adam::new(1e-3);
    assert!(matches!(opt.step(&mut p, &[]), Err(NnError::GradientCount { .. })));
}
