use super::{CrossEvalMatrix, ExperimentConfig, ExperimentError};
use crate::coordinator::{RoundRecord, SessionSummary};
use crate::data::{SiloDataset, Split};
use crate::nn::{build_model, ModelWeights, OptimizerState, ResidualNet};
use crate::sim::{prepare_silos, simulate, SimClient, SimOptions, SimReport};
use crate::trainer::{local_train, DeviceClass, NodeProfile, TrainError};

/// A trained model, or the reason training failed.
#[derive(Clone, Debug)]
pub struct ModelRun {
    pub name: String,
    pub weights: Result<ModelWeights, String>,
    /// Mean test accuracy across silos after each round.
    pub curve: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct FederatedRun {
    pub model: ModelRun,
    pub ledger: Vec<RoundRecord>,
    pub summary: SessionSummary,
    pub report: SimReport,
}

pub struct ExperimentResult {
    pub seed: u64,
    pub clients: Vec<SimClient>,
    pub locals: Vec<ModelRun>,
    pub centralized: ModelRun,
    pub federated: FederatedRun,
    pub matrix: CrossEvalMatrix,
}

/// Generates every silo for `seed`.
pub fn prepare(config: &ExperimentConfig, seed: u64) -> Result<Vec<SimClient>, ExperimentError> {
    config.validate()?;
    Ok(prepare_silos(&config.silo_specs(), &config.profiles(), seed)?)
}

fn mean_accuracy(net: &ResidualNet, w: &ModelWeights, clients: &[SimClient]) -> f64 {
    let accs: Vec<f64> = clients
        .iter()
        .filter_map(|c| {
            let test = c.silo.labelled(Split::Test);
            (!test.is_empty()).then(|| net.evaluate(w, &test).map(|e| e.accuracy).unwrap_or(0.0))
        })
        .collect();
    accs.iter().sum::<f64>() / accs.len().max(1) as f64
}

/// `rounds` consecutive local rounds on one dataset with no aggregation.
fn train_alone(
    config: &ExperimentConfig,
    silo: &SiloDataset,
    profile: &NodeProfile,
    seed: u64,
    score: &mut dyn FnMut(&ModelWeights) -> f64,
) -> Result<(ModelWeights, Vec<f64>), TrainError> {
    let net = ResidualNet::new(config.arch.clone())?;
    let mut weights = build_model(&config.arch, seed)?;
    let mut opt = OptimizerState::new(&config.optim);
    let mut curve = Vec::with_capacity(config.rounds as usize);
    for round in 0..config.rounds {
        weights = local_train(&net, weights, silo, profile, &mut opt, seed, round)?.weights;
        curve.push(score(&weights));
    }
    Ok((weights, curve))
}

/// One model per silo, each trained for `R` rounds of its own node's
/// epochs on its own train split only.
pub fn train_locals(
    config: &ExperimentConfig,
    clients: &[SimClient],
    seed: u64,
) -> Vec<ModelRun> {
    clients
        .iter()
        .map(|c| {
            log::info!("training local model for {}", c.profile.client_id);
            let result = train_alone(config, &c.silo, &c.profile, seed, &mut |_| f64::NAN);
            ModelRun {
                name: format!("local_{}", c.profile.client_id),
                weights: result.map(|(w, _)| w).map_err(|e| {
                    log::error!("local model {} failed: {e}", c.profile.client_id);
                    e.to_string()
                }),
                curve: Vec::new(),
            }
        })
        .collect()
}

/// Every silo's train split merged into one dataset.
pub fn merged_train(clients: &[SimClient]) -> SiloDataset {
    let input_size = clients.first().map_or(0, |c| c.silo.input_size);
    let samples = clients
        .iter()
        .flat_map(|c| c.silo.splits.train.iter().map(|&i| c.silo.samples[i].clone()))
        .collect();
    SiloDataset::unsplit("centralized", input_size, samples)
}

/// One model on the pooled train data, `R` rounds of the centralized budget.
pub fn train_centralized(config: &ExperimentConfig, clients: &[SimClient], seed: u64) -> ModelRun {
    log::info!("training centralized model");
    let merged = merged_train(clients);
    let profile = NodeProfile {
        client_id: "centralized".into(),
        epochs_per_round: config.centralized.epochs_per_round,
        batch_size: config.centralized.batch_size,
        train_fraction: 1.0,
        device_class: DeviceClass::Gpu,
        speed_iters_per_s: 1.0,
    };
    let net = ResidualNet::new(config.arch.clone()).expect("validated");
    let result = train_alone(config, &merged, &profile, seed, &mut |w| {
        mean_accuracy(&net, w, clients)
    });
    match result {
        Ok((w, curve)) => ModelRun {
            name: "centralized".into(),
            weights: Ok(w),
            curve,
        },
        Err(e) => ModelRun {
            name: "centralized".into(),
            weights: Err(e.to_string()),
            curve: Vec::new(),
        },
    }
}

/// The federated session over all silos on the in-process simulator.
pub fn train_federated(
    config: &ExperimentConfig,
    clients: &[SimClient],
    seed: u64,
) -> Result<FederatedRun, ExperimentError> {
    log::info!("training federated model");
    let out = simulate(
        clients,
        &config.plan(),
        &config.arch,
        &config.optim,
        seed,
        &SimOptions::default(),
    )?;
    Ok(FederatedRun {
        model: ModelRun {
            name: "federated".into(),
            weights: Ok(out.weights),
            curve: out.report.accuracy_curve(),
        },
        ledger: out.ledger,
        summary: out.summary,
        report: out.report,
    })
}

/// Trains all eight models and scores each on every silo's test split.
pub fn run_experiment(config: &ExperimentConfig, seed: u64) -> Result<ExperimentResult, ExperimentError> {
    let clients = prepare(config, seed)?;
    let locals = train_locals(config, &clients, seed);
    let centralized = train_centralized(config, &clients, seed);
    let federated = train_federated(config, &clients, seed)?;
    let net = ResidualNet::new(config.arch.clone())?;
    let models: Vec<&ModelRun> = locals
        .iter()
        .chain([&centralized, &federated.model])
        .collect();
    let matrix = CrossEvalMatrix::evaluate(&net, &models, &clients)?;
    Ok(ExperimentResult {
        seed,
        clients,
        locals,
        centralized,
        federated,
        matrix,
    })
}
