//! Training-core checks against independent references.

use fedkit::nn::{
    build_model, softmax_xent, ArchitectureSpec, OptimConfig, OptimizerState, PlateauScheduler,
    ResidualNet, Tensor,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod support;

use support::gradcheck::{grad_check_spec, gradient_check_error, jitter, random_batch, reference};

#[test]
fn analytic_gradients_match_finite_differences() {
    for seed in [1, 2, 3] {
        let (err, checked, skipped) = gradient_check_error(seed);
        eprintln!("seed {seed}: max rel err {err:.2e}, {checked} checked, {skipped} at kinks");
        assert!(err < 1e-2, "seed {seed}: max relative error {err}");
        assert!(skipped * 10 < checked, "seed {seed}: {skipped} kinks vs {checked} checked");
    }
}

#[test]
fn reference_forward_agrees_with_library_forward() {
    let spec = grad_check_spec();
    let net = ResidualNet::new(spec.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut w = net.init(11);
    jitter(&mut w, &mut rng, 0.3);
    let x = random_batch(&mut rng, 2, &spec);
    let logits = net.forward(&w, &x).unwrap();
    let params = reference::params(&w);
    for i in 0..2 {
        let img: Vec<f64> = x.row(i).iter().map(|&v| v as f64).collect();
        let expect = reference::logits(&spec, &params, &img, &mut Vec::new());
        for (a, b) in logits.row(i).iter().zip(&expect) {
            assert!((*a as f64 - b).abs() < 1e-5, "{a} vs {b}");
        }
    }
}

#[test]
fn build_is_deterministic_and_seed_sensitive() {
    let spec = ArchitectureSpec::default();
    let a = build_model(&spec, 7).unwrap();
    let b = build_model(&spec, 7).unwrap();
    let c = build_model(&spec, 8).unwrap();
    assert_eq!(a.manifest_hash(), b.manifest_hash());
    assert_eq!(a.value_bytes(), b.value_bytes());
    assert_eq!(a.manifest_hash(), c.manifest_hash());
    assert_ne!(a.value_bytes(), c.value_bytes());
}

#[test]
fn head_rows_follow_class_count() {
    let spec = ArchitectureSpec {
        num_classes: 4,
        ..ArchitectureSpec::desk()
    };
    let w = build_model(&spec, 1).unwrap();
    assert_eq!(w.get("head.weight").unwrap().shape()[0], 4);
    assert_eq!(w.get("head.bias").unwrap().shape(), &[4]);
}

#[test]
fn forward_properties() {
    let spec = ArchitectureSpec::desk();
    let net = ResidualNet::new(spec.clone()).unwrap();
    let w = net.init(5);

    let zeros = Tensor::zeros(vec![3, 1, 32, 32]);
    let a = net.forward(&w, &zeros).unwrap();
    let b = net.forward(&w, &zeros).unwrap();
    assert_eq!(a.shape(), &[3, 4]);
    assert!(a.is_finite());
    assert_eq!(a, b);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let one = random_batch(&mut rng, 1, &spec);
    let dup = Tensor::stack(&[&Tensor::new(vec![1, 32, 32], one.data().to_vec()).unwrap(); 2]).unwrap();
    let out = net.forward(&w, &dup).unwrap();
    assert_eq!(out.row(0), out.row(1));

    let many = random_batch(&mut rng, 16, &spec);
    let logits = net.forward(&w, &many).unwrap();
    let (_, probs) = softmax_xent(logits.data(), &[0; 16], 4);
    for row in probs.chunks(4) {
        let s: f32 = row.iter().sum();
        assert!((s - 1.0).abs() < 1e-5, "{s}");
    }
}

#[test]
fn initial_loss_is_near_max_entropy() {
    for classes in [2usize, 4, 6] {
        let spec = ArchitectureSpec {
            num_classes: classes,
            ..ArchitectureSpec::default()
        };
        let net = ResidualNet::new(spec.clone()).unwrap();
        let w = net.init(9);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_batch(&mut rng, 8, &spec);
        let labels: Vec<usize> = (0..8).map(|i| i % classes).collect();
        let loss = net.loss(&w, &x, &labels).unwrap();
        let target = (classes as f64).ln();
        assert!((loss - target).abs() < 0.1, "C={classes}: {loss} vs {target}");
    }
}

#[test]
fn zero_learning_rate_leaves_weights_bit_identical() {
    let spec = ArchitectureSpec::desk();
    let net = ResidualNet::new(spec.clone()).unwrap();
    let mut w = net.init(2);
    let before = w.value_bytes();
    let mut opt = OptimizerState::new(&OptimConfig::default());
    opt.learning_rate = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..3 {
        let x = random_batch(&mut rng, 4, &spec);
        net.train_step(&mut w, &x, &[0, 1, 2, 3], &mut opt).unwrap();
    }
    assert_eq!(w.value_bytes(), before);
}

#[test]
fn evaluation_contracts() {
    let spec = ArchitectureSpec::desk();
    let net = ResidualNet::new(spec.clone()).unwrap();
    let w = net.init(4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let images: Vec<Tensor> = (0..40)
        .map(|_| {
            let d = (0..32 * 32).map(|_| rng.random::<f32>()).collect();
            Tensor::new(vec![1, 32, 32], d).unwrap()
        })
        .collect();

    // labels taken from the model's own predictions
    let refs: Vec<&Tensor> = images.iter().collect();
    let preds = net.predict(&w, &Tensor::stack(&refs).unwrap()).unwrap();
    let own: Vec<(&Tensor, usize)> = images.iter().zip(preds.iter().copied()).collect();
    assert_eq!(net.evaluate(&w, &own).unwrap().accuracy, 1.0);

    // order does not matter
    let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
    let fwd: Vec<(&Tensor, usize)> = images.iter().zip(labels.iter().copied()).collect();
    let mut rev = fwd.clone();
    rev.reverse();
    let a = net.evaluate(&w, &fwd).unwrap();
    let b = net.evaluate(&w, &rev).unwrap();
    assert_eq!(a.accuracy, b.accuracy);
    assert_eq!(a.correct, b.correct);

    // zeroed head: every logit ties, lowest index wins, balanced set -> 1/4
    let mut zeroed = w.clone();
    for (i, (name, _)) in w.entries().iter().enumerate() {
        if name.starts_with("head.") {
            zeroed.tensor_mut(i).data_mut().fill(0.0);
        }
    }
    assert_eq!(net.evaluate(&zeroed, &fwd).unwrap().accuracy, 0.25);

    assert!(net.evaluate(&w, &[]).is_err());
}

proptest! {
    #[test]
    fn plateau_never_raises_rate(metrics in proptest::collection::vec(0.0f64..10.0, 1..60),
                                 patience in 0usize..5) {
        let mut s = PlateauScheduler::new(patience, 0.5, 1e-3, 1e-3);
        let mut lr = 0.1;
        for m in metrics {
            let next = s.report(m, lr);
            prop_assert!(next <= lr);
            prop_assert!(next >= 1e-3);
            lr = next;
        }
    }
}
