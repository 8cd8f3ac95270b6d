mod common;

use proptest::prelude::*;
use rand::Rng;

use dermclass_core::heads::Head;
use dermclass_core::nn::{grad_check, Checkpoint, LayerKind, LossFn};
use dermclass_core::{Architecture, LayerSpec, Network, Tensor};

fn random_tensor(seed: u64, shape: Vec<usize>) -> Tensor {
    let mut rng = common::rng(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn check_single(arch: Architecture, seeds: std::ops::Range<u64>) {
    for seed in seeds {
        let mut shape = vec![2];
        shape.extend_from_slice(&arch.input_shape);
        let input = random_tensor(seed + 500, shape);
        let net = Network::new(arch.clone(), seed).unwrap();
        let report = grad_check(&net, &input, &LossFn::Sum, 1e-5, 1e-4).unwrap();
        assert!(report.passed(), "seed {seed}: {:?}", report.checks);
    }
}

#[test]
fn conv_gradients_with_stride_and_padding() {
    for (stride, padding) in [(1, 0), (2, 0), (1, 2), (3, 1)] {
        let arch = Architecture::new(
            vec![2, 7, 6],
            vec![LayerSpec::new(LayerKind::Conv2d {
                filters: 3,
                kernel: [3, 2],
                stride,
                padding,
            })],
        );
        check_single(arch, 0..5);
    }
}

#[test]
fn linear_and_relu_gradients() {
    let arch = Architecture::new(
        vec![6],
        vec![
            LayerSpec::linear(5),
            LayerSpec::relu(),
            LayerSpec::linear(3),
        ],
    );
    check_single(arch, 0..20);
}

#[test]
fn pool_and_flatten_gradients() {
    let arch = Architecture::new(
        vec![2, 6, 6],
        vec![
            LayerSpec::new(LayerKind::MaxPool2d {
                kernel: [2, 3],
                stride: 1,
            }),
            LayerSpec::flatten(),
            LayerSpec::linear(2),
        ],
    );
    check_single(arch, 0..20);
}

#[test]
fn desk_scale_gradients_under_both_losses() {
    let arch = Architecture::desk_scale([1, 16, 16], 5);
    let net = Network::new(arch, 4).unwrap();
    let input = random_tensor(9, vec![2, 1, 16, 16]);
    let softmax = LossFn::Softmax { labels: vec![1, 4] };
    let targets = Tensor::new(
        vec![2, 5],
        vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0],
    )
    .unwrap();
    for loss in [softmax, LossFn::SigmoidCe { targets }] {
        let report = grad_check(&net, &input, &loss, 1e-5, 1e-4).unwrap();
        assert!(
            report.passed(),
            "{:?}",
            report.checks.iter().find(|c| !c.passed)
        );
    }
}

#[test]
fn pooling_ties_route_to_first_element() {
    let arch = Architecture::new(vec![1, 2, 2], vec![LayerSpec::maxpool2d(2)]);
    let mut net = Network::new(arch, 0).unwrap();
    let x = Tensor::new(vec![1, 1, 2, 2], vec![0.5, 0.5, 0.5, 0.5]).unwrap();
    net.forward(&x).unwrap();
    let g = net
        .backward(&Tensor::new(vec![1, 1, 1, 1], vec![3.0]).unwrap())
        .unwrap();
    assert_eq!(g.data(), &[3.0, 0.0, 0.0, 0.0]);
}

#[test]
fn backward_without_forward_is_rejected() {
    let mut net = Network::new(Architecture::new(vec![2], vec![LayerSpec::linear(1)]), 0).unwrap();
    assert!(net.backward(&Tensor::zeros(vec![1, 1])).is_err());
}

#[test]
fn invalid_architectures_name_the_layer() {
    let arch = Architecture::new(
        vec![1, 4, 4],
        vec![LayerSpec::conv2d(2, 3), LayerSpec::conv2d(2, 3)],
    );
    let err = Network::new(arch, 0).unwrap_err().to_string();
    assert!(err.contains("layer 1"), "{err}");
}

#[test]
fn checkpoint_file_roundtrip_is_byte_stable() {
    let net = Network::new(Architecture::desk_scale([1, 16, 16], 3), 17).unwrap();
    let ckpt = Checkpoint::new(
        net,
        Some(Head::MultiLabel),
        vec!["a".into(), "b".into(), "c".into()],
    );
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    ckpt.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, ckpt);
    assert_eq!(loaded.to_bytes(), std::fs::read(&path).unwrap());
    let x = random_tensor(1, vec![2, 1, 16, 16]);
    assert_eq!(
        loaded.network.infer(&x).unwrap(),
        ckpt.network.infer(&x).unwrap()
    );
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let net = Network::new(Architecture::new(vec![3], vec![LayerSpec::linear(2)]), 1).unwrap();
    let bytes = Checkpoint::new(net, None, vec![]).to_bytes();
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    let mut bad = bytes.clone();
    bad[0] ^= 0xff;
    assert!(Checkpoint::from_bytes(&bad).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn pooled_gradient_mass_is_conserved(seed in any::<u64>(), k in 1usize..4) {
        let arch = Architecture::new(vec![2, 6, 6], vec![LayerSpec::new(LayerKind::MaxPool2d { kernel: [k, k], stride: k })]);
        let mut net = Network::new(arch, 0).unwrap();
        let x = random_tensor(seed, vec![1, 2, 6, 6]);
        let y = net.forward(&x).unwrap();
        let upstream = random_tensor(seed ^ 1, y.shape().to_vec());
        let g = net.backward(&upstream).unwrap();
        let total: f64 = g.data().iter().sum();
        prop_assert!((total - upstream.data().iter().sum::<f64>()).abs() < 1e-12);
        // Each window sends its gradient to exactly one position.
        let nonzero = g.data().iter().filter(|&&v| v != 0.0).count();
        prop_assert!(nonzero <= y.len());
    }

    #[test]
    fn composition_matches_whole_network(seed in any::<u64>(), at in 0usize..=10) {
        let net = Network::new(Architecture::desk_scale([1, 16, 16], 3), seed).unwrap();
        let x = random_tensor(seed.wrapping_add(7), vec![2, 1, 16, 16]);
        let (head, tail) = net.split_at(at).unwrap();
        let composed = tail.infer(&head.infer(&x).unwrap()).unwrap();
        prop_assert_eq!(composed, net.infer(&x).unwrap());
    }

    #[test]
    fn forward_is_deterministic(seed in any::<u64>()) {
        let arch = Architecture::desk_scale([1, 12, 12], 4);
        let a = Network::new(arch.clone(), seed).unwrap();
        let b = Network::new(arch, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let x = random_tensor(seed, vec![3, 1, 12, 12]);
        prop_assert_eq!(a.infer(&x).unwrap(), b.infer(&x).unwrap());
    }
}
