//! Reference computations for aggregation and single-client federation.

use fedkit::coordinator::{aggregate, AggregationMode, Contribution, Coordinator, CoordinatorConfig, RoundPlan};
use fedkit::data::{synth_silo, SiloSpec};
use fedkit::nn::{build_model, ArchitectureSpec, OptimConfig, OptimizerState, ResidualNet, StageSpec};
use fedkit::trainer::{local_train, ClientSession, LoopbackClient, NodeProfile};
use fedkit::{ModelWeights, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_shapes(rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    (0..rng.random_range(1..5))
        .map(|_| (0..rng.random_range(1..4)).map(|_| rng.random_range(1..6)).collect())
        .collect()
}

pub fn random_weights(rng: &mut ChaCha8Rng, shapes: &[Vec<usize>]) -> ModelWeights {
    let entries = shapes
        .iter()
        .enumerate()
        .map(|(i, shape)| {
            let n = shape.iter().product();
            let data = (0..n).map(|_| rng.random_range(-10.0f32..10.0)).collect();
            (format!("t{i}"), Tensor::new(shape.clone(), data).unwrap())
        })
        .collect();
    ModelWeights::new(entries).unwrap()
}

/// Element-by-element weighted mean, accumulated in f64 in input order.
pub fn brute_force_mean(ws: &[ModelWeights], n: &[u64]) -> Vec<Vec<f64>> {
    let total: u64 = n.iter().sum();
    (0..ws[0].len())
        .map(|j| {
            (0..ws[0].tensor(j).len())
                .map(|e| {
                    let num: f64 = ws
                        .iter()
                        .zip(n)
                        .map(|(w, &nk)| nk as f64 * w.tensor(j).data()[e] as f64)
                        .sum();
                    num / total as f64
                })
                .collect()
        })
        .collect()
}

pub fn contributions<'a>(ids: &'a [String], ws: &'a [ModelWeights], n: &[u64]) -> Vec<Contribution<'a>> {
    ids.iter()
        .zip(ws)
        .zip(n)
        .map(|((id, w), &n_k)| Contribution {
            client_id: id,
            weights: w,
            n_k,
        })
        .collect()
}

/// Largest relative deviation of `got` from the oracle over all elements.
pub fn max_rel_err(got: &ModelWeights, want: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (j, col) in want.iter().enumerate() {
        for (&g, &w) in got.tensor(j).data().iter().zip(col) {
            let err = (g as f64 - w).abs() / w.abs().max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}

pub fn aggregation_oracle_worst(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let k = rng.random_range(1..=8);
        let shapes = random_shapes(&mut rng);
        let ws: Vec<ModelWeights> = (0..k).map(|_| random_weights(&mut rng, &shapes)).collect();
        let n: Vec<u64> = (0..k).map(|_| rng.random_range(1..5000)).collect();
        let ids: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
        let got = aggregate(&contributions(&ids, &ws, &n), AggregationMode::Weighted).unwrap();
        worst = worst.max(max_rel_err(&got, &brute_force_mean(&ws, &n)));
    }
    worst
}

pub fn tiny_arch() -> ArchitectureSpec {
    ArchitectureSpec {
        input_size: 8,
        channels: 1,
        num_classes: 4,
        stem_stride: 1,
        stages: vec![StageSpec { blocks: 1, width: 2 }],
    }
}

/// Max weight difference between a one-client federation and the same
/// local-training schedule run directly.
pub fn single_client_equivalence(rounds: u32, epochs: usize) -> f32 {
    let arch = tiny_arch();
    let mut spec = SiloSpec::new("egypt", [12, 12, 12, 12]);
    spec.input_size = arch.input_size;
    let silo = synth_silo(&spec, 5).unwrap();
    let mut profile = NodeProfile::new("egypt");
    profile.epochs_per_round = epochs;
    profile.batch_size = 4;
    let optim = OptimConfig {
        learning_rate: 0.02,
        clip_norm: Some(5.0),
        ..OptimConfig::default()
    };
    let seed = 21;

    let initial = build_model(&arch, seed).unwrap();
    let plan = RoundPlan::new(rounds);
    let config = CoordinatorConfig::new(plan, arch.clone(), optim.clone(), seed);
    let mut coord = Coordinator::new(config, initial.clone()).unwrap();
    let session = ClientSession::new(silo.clone(), profile.clone()).unwrap();
    let federated = coord.run_session(&mut [LoopbackClient::new(session)]).unwrap().weights;

    let net = ResidualNet::new(arch).unwrap();
    let mut opt = OptimizerState::new(&optim);
    let mut plain = initial;
    for r in 0..rounds {
        plain = local_train(&net, plain, &silo, &profile, &mut opt, seed, r)
            .unwrap()
            .weights;
    }
    federated.max_abs_diff(&plain).unwrap()
}

