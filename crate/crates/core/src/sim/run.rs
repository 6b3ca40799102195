use std::collections::BTreeMap;

use super::{SimError, SimReport, SimRound};
use crate::coordinator::{
    Coordinator, CoordinatorConfig, Dispatch, RoundPlan, RoundRecord, SessionSummary,
};
use crate::data::{synth_silo, SiloDataset, SiloSpec, Split};
use crate::nn::{build_model, ArchitectureSpec, ModelWeights, OptimConfig, ResidualNet};
use crate::trainer::{client_loop, ClientSession, LoopbackClient, NodeProfile};
use crate::wire::in_process_pair;

/// A silo and the node that trains on it.
#[derive(Clone, Debug)]
pub struct SimClient {
    pub silo: SiloDataset,
    pub profile: NodeProfile,
}

#[derive(Clone, Debug)]
pub struct SimOptions {
    pub dispatch: Dispatch,
    /// Virtual seconds charged for each aggregation.
    pub aggregation_cost_s: f64,
    /// Virtual seconds added to every client round.
    pub overhead_s: f64,
    /// Score the global model on every silo's test split after each round.
    pub evaluate: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dispatch: Dispatch::Sequential,
            aggregation_cost_s: 0.0,
            overhead_s: 0.0,
            evaluate: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub weights: ModelWeights,
    pub report: SimReport,
    pub ledger: Vec<RoundRecord>,
    pub summary: SessionSummary,
}

/// Generates each silo with its node's train fraction.
pub fn prepare_silos(
    specs: &[SiloSpec],
    profiles: &[NodeProfile],
    seed: u64,
) -> Result<Vec<SimClient>, SimError> {
    if specs.len() != profiles.len() {
        return Err(SimError::Contract(format!(
            "{} silo specs for {} profiles",
            specs.len(),
            profiles.len()
        )));
    }
    specs
        .iter()
        .zip(profiles)
        .map(|(spec, profile)| {
            let mut spec = spec.clone();
            spec.train_fraction = profile.train_fraction;
            if spec.train_fraction + spec.val_fraction > 1.0 {
                spec.val_fraction = 1.0 - spec.train_fraction;
            }
            Ok(SimClient {
                silo: synth_silo(&spec, seed)?,
                profile: profile.clone(),
            })
        })
        .collect()
}

/// Generates the silos, then runs [`simulate`].
pub fn run_simulation(
    specs: &[SiloSpec],
    profiles: &[NodeProfile],
    plan: &RoundPlan,
    arch: &ArchitectureSpec,
    optim: &OptimConfig,
    seed: u64,
    options: &SimOptions,
) -> Result<SimOutput, SimError> {
    let clients = prepare_silos(specs, profiles, seed)?;
    simulate(&clients, plan, arch, optim, seed, options)
}

/// Mean test accuracy over silos that have a test split.
fn mean_test_accuracy(
    net: &ResidualNet,
    weights: &ModelWeights,
    silos: &[&SiloDataset],
) -> Option<(f64, f64)> {
    let mut acc = 0.0;
    let mut loss = 0.0;
    let mut n = 0;
    for s in silos {
        let test = s.labelled(Split::Test);
        if test.is_empty() {
            continue;
        }
        let e = net.evaluate(weights, &test).ok()?;
        acc += e.accuracy;
        loss += e.mean_loss;
        n += 1;
    }
    (n > 0).then(|| (acc / n as f64, loss / n as f64))
}

/// A full federated session over in-process links, timed on the virtual
/// clock. Sequential and concurrent dispatch give identical results.
pub fn simulate(
    clients: &[SimClient],
    plan: &RoundPlan,
    arch: &ArchitectureSpec,
    optim: &OptimConfig,
    seed: u64,
    options: &SimOptions,
) -> Result<SimOutput, SimError> {
    if clients.is_empty() {
        return Err(SimError::Contract("simulation needs at least one client".into()));
    }
    let net = ResidualNet::new(arch.clone()).map_err(crate::trainer::TrainError::from)?;
    let initial = build_model(arch, seed).map_err(crate::trainer::TrainError::from)?;
    let speeds: BTreeMap<String, f64> = clients
        .iter()
        .map(|c| (c.profile.client_id.clone(), c.profile.speed_iters_per_s))
        .collect();
    let silos: Vec<&SiloDataset> = clients.iter().map(|c| &c.silo).collect();

    let mut config = CoordinatorConfig::new(plan.clone(), arch.clone(), optim.clone(), seed);
    config.dispatch = options.dispatch;
    let mut coordinator = Coordinator::new(config, initial)?;
    if options.evaluate {
        coordinator = coordinator.with_evaluator(Box::new(|_, w| mean_test_accuracy(&net, w, &silos)));
    }

    let result = match options.dispatch {
        Dispatch::Sequential => {
            let mut links = clients
                .iter()
                .map(|c| Ok(LoopbackClient::new(ClientSession::new(c.silo.clone(), c.profile.clone())?)))
                .collect::<Result<Vec<_>, SimError>>()?;
            coordinator.run_session(&mut links)
        }
        Dispatch::Concurrent => std::thread::scope(|s| {
            let mut server_ends = Vec::with_capacity(clients.len());
            for c in clients {
                let (server_end, mut client_end) = in_process_pair();
                server_ends.push(server_end);
                let session = ClientSession::new(c.silo.clone(), c.profile.clone())?;
                s.spawn(move || {
                    if let Err(e) = client_loop(&mut client_end, session, None) {
                        log::error!("client loop failed: {e}");
                    }
                });
            }
            let r = coordinator.run_session(&mut server_ends);
            drop(server_ends);
            Ok::<_, SimError>(r)
        })?,
    };
    let session = result?;

    let mut report = SimReport::default();
    for rec in &session.ledger {
        let client_s: BTreeMap<String, f64> = rec
            .clients
            .iter()
            .map(|c| {
                (
                    c.client_id.clone(),
                    c.steps as f64 / speeds[&c.client_id] + options.overhead_s,
                )
            })
            .collect();
        let (slowest, slowest_s) = client_s
            .iter()
            .fold((String::new(), f64::NEG_INFINITY), |best, (id, &t)| {
                if t > best.1 {
                    (id.clone(), t)
                } else {
                    best
                }
            });
        let duration_s = slowest_s + options.aggregation_cost_s;
        report.total_virtual_s += duration_s;
        report.rounds.push(SimRound {
            round: rec.round,
            client_s,
            slowest,
            aggregation_s: options.aggregation_cost_s,
            duration_s,
            accuracy: rec.eval.map(|e| e.accuracy),
        });
    }
    Ok(SimOutput {
        weights: session.weights,
        report,
        ledger: session.ledger,
        summary: session.summary,
    })
}
