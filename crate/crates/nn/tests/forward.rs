use proptest::prelude::*;
use rand::SeedableRng;
use resgen_nn::{Activation, Adam, ChaCha8Rng, ForwardCtx, Graph, LayerSpec, Network, NnError, Padding, Tensor};

fn conv(filters: usize, kernel: usize, stride: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Conv2d {
        filters,
        kernel,
        stride,
        padding: Padding::Same,
        activation,
        spectral_norm: false,
    }
}

#[test]
fn empty_network_is_identity() {
    let net = Network::<f32>::new(&[2, 3], vec![], 0).unwrap();
    let x = Tensor::new(&[1, 2, 3], vec![1.0, -2.0, 3.5, 0.0, 7.0, -1.0]).unwrap();
    assert_eq!(net.predict(&x).unwrap(), x);
}

#[test]
fn tanh_of_zero_is_zero() {
    let net = Network::<f32>::new(&[1], vec![LayerSpec::Activation { activation: Activation::Tanh }], 0).unwrap();
    let y = net.predict(&Tensor::zeros(&[1, 1])).unwrap();
    assert_eq!(y.data(), &[0.0]);
}

#[test]
fn pointwise_conv_with_weight_two_doubles_ones() {
    let mut net = Network::<f32>::new(&[1, 4, 4], vec![conv(1, 1, 1, Activation::Linear)], 0).unwrap();
    net.params_mut()[0].tensor.data_mut()[0] = 2.0;
    net.params_mut()[1].tensor.data_mut()[0] = 0.0;
    let y = net.predict(&Tensor::ones(&[2, 1, 4, 4])).unwrap();
    assert_eq!(y.shape(), &[2, 1, 4, 4]);
    assert!(y.data().iter().all(|&v| v == 2.0));
}

#[test]
fn shape_errors_name_the_layer() {
    let layers = vec![
        conv(2, 3, 1, Activation::Relu),
        LayerSpec::Dense {
            units: 3,
            activation: Activation::Linear,
            spectral_norm: false,
        },
    ];
    match Network::<f32>::new(&[1, 4, 4], layers, 0) {
        Err(NnError::Layer { index, kind, .. }) => {
            assert_eq!(index, 1);
            assert_eq!(kind, "dense");
        }
        other => panic!("expected a layer error, got {other:?}"),
    }
    let net = Network::<f32>::new(&[1, 4, 4], vec![conv(2, 3, 1, Activation::Relu)], 0).unwrap();
    let err = net.predict(&Tensor::zeros(&[1, 1, 5, 4])).unwrap_err();
    assert!(matches!(err, NnError::InputShape { .. }), "{err}");
}

#[test]
fn layer_specs_parse_from_toml() {
    #[derive(serde::Deserialize)]
    struct Doc {
        layers: Vec<LayerSpec>,
    }
    let doc: Doc = toml::from_str(
        r#"
        [[layers]]
        kind = "conv2d"
        filters = 8
        kernel = 3
        stride = 2
        activation = "leaky-relu"
        [[layers]]
        kind = "dropout"
        rate = 0.3
        [[layers]]
        kind = "dense"
        units = 4
        activation = "leaky-relu:0.1"
        spectral_norm = true
        "#,
    )
    .unwrap();
    assert_eq!(doc.layers[0], conv(8, 3, 2, Activation::LeakyRelu(0.2)));
    assert_eq!(
        doc.layers[2],
        LayerSpec::Dense {
            units: 4,
            activation: Activation::LeakyRelu(0.1),
            spectral_norm: true
        }
    );
    assert!(toml::from_str::<Doc>("[[layers]]\nkind = \"flatten\"\nunits = 3\n").is_err());
    assert!(toml::from_str::<Doc>("[[layers]]\nkind = \"activation\"\nactivation = \"swish\"\n").is_err());
}

#[test]
fn transposed_convolution_doubles_resolution() {
    let spec = LayerSpec::Conv2dTranspose {
        filters: 4,
        kernel: 3,
        stride: 2,
        padding: Padding::Same,
        output_shape: None,
        activation: Activation::Relu,
        spectral_norm: false,
    };
    let net = Network::<f32>::new(&[2, 6, 6], vec![spec], 0).unwrap();
    assert_eq!(net.output_shape(), &[4, 12, 12]);
    let odd = LayerSpec::Conv2dTranspose {
        filters: 1,
        kernel: 3,
        stride: 2,
        padding: Padding::Same,
        output_shape: Some([13, 13]),
        activation: Activation::Linear,
        spectral_norm: false,
    };
    let net = Network::<f32>::new(&[1, 7, 7], vec![odd.clone()], 0).unwrap();
    assert_eq!(net.output_shape(), &[1, 13, 13]);
    assert!(Network::<f32>::new(&[1, 5, 5], vec![odd], 0).is_err());
}

#[test]
fn stochastic_layers_are_inactive_at_inference() {
    let layers = vec![LayerSpec::GaussianNoise { std: 1.0 }, LayerSpec::Dropout { rate: 0.5 }];
    let net = Network::<f32>::new(&[16], layers, 0).unwrap();
    let x = Tensor::ones(&[2, 16]);
    assert_eq!(net.predict(&x).unwrap(), x);

    let mut g = Graph::new();
    let p = net.bind(&mut g);
    let xv = g.input(x.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let y = net.forward(&mut g, &p, xv, &mut ForwardCtx::train(&mut rng)).unwrap();
    assert_ne!(g.value(y), &x);
}

#[test]
fn batch_norm_uses_running_statistics_at_inference() {
    let mut net = Network::<f32>::new(&[1], vec![LayerSpec::BatchNorm {}], 0).unwrap();
    let x = Tensor::new(&[4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut g = Graph::new();
    let p = net.bind(&mut g);
    let xv = g.input(x.clone());
    let y = net.forward_mut(&mut g, &p, xv, &mut ForwardCtx::train(&mut rng)).unwrap();
    let mean: f32 = g.value(y).data().iter().sum();
    assert!(mean.abs() < 1e-5);
    let moving_mean = net.state()[0].tensor.data()[0];
    assert!((moving_mean - 0.01 * 2.5).abs() < 1e-6);
    let moving_var = net.state()[1].tensor.data()[0];
    assert!((moving_var - (0.99 + 0.01 * 1.25)).abs() < 1e-6);
    let y = net.predict(&x).unwrap();
    let expected = (1.0 - moving_mean) / (moving_var + 1e-3).sqrt();
    assert!((y.data()[0] - expected).abs() < 1e-6);
}

fn train_steps(seed: u64, steps: usize) -> Network<f32> {
    let layers = vec![
        conv(3, 3, 2, Activation::Linear),
        LayerSpec::BatchNorm {},
        LayerSpec::Activation {
            activation: Activation::LeakyRelu(0.2),
        },
        LayerSpec::Dropout { rate: 0.2 },
        LayerSpec::Flatten {},
        LayerSpec::Dense {
            units: 1,
            activation: Activation::Tanh,
            spectral_norm: true,
        },
    ];
    let mut net = Network::<f32>::new(&[1, 8, 8], layers, seed).unwrap();
    let mut opt = Adam::new(1e-2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::randn(&[4, 1, 8, 8], 1.0, &mut rng);
    for _ in 0..steps {
        let mut g = Graph::new();
        let p = net.bind(&mut g);
        let xv = g.input(x.clone());
        let y = net.forward_mut(&mut g, &p, xv, &mut ForwardCtx::train(&mut rng)).unwrap();
        let sq = g.square(y);
        let loss = g.mean(sq);
        let grads = g.backward(loss, &p).unwrap();
        opt.step(net.params_mut(), &grads).unwrap();
    }
    net
}

#[test]
fn training_is_bit_reproducible() {
    let a = train_steps(5, 6);
    let b = train_steps(5, 6);
    assert_eq!(a.params(), b.params());
    assert_eq!(a.state(), b.state());
    let c = train_steps(6, 6);
    assert_ne!(a.params(), c.params());
}

proptest! {
    #[test]
    fn tanh_outputs_stay_strictly_inside_unit_interval(scale in 0.1f32..1e4, seed in 0u64..1000) {
        let net = Network::<f32>::new(
            &[1, 6, 6],
            vec![conv(2, 3, 1, Activation::Tanh)],
            seed,
        ).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::<f32>::randn(&[2, 1, 6, 6], scale as f64, &mut rng);
        let y = net.predict(&x).unwrap();
        prop_assert!(y.data().iter().all(|v| v.abs() < 1.0));
    }
}
