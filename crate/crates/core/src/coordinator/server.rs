use std::collections::BTreeMap;
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::{
    aggregate, ClientRoundEntry, Contribution, CoordinatorError, RoundEval, RoundPlan, RoundRecord,
    SessionSummary,
};
use crate::nn::{ArchitectureSpec, ModelWeights, OptimConfig};
use crate::trainer::NodeProfile;
use crate::wire::{ClientMetrics, Message, SessionConfig, Transport, WireError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Phase {
    AwaitRegistration,
    Broadcasting,
    AwaitResults,
    Aggregating,
    Done,
    Failed,
}

/// How the server talks to clients within a round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Dispatch {
    /// One handler thread per client; all clients train at once.
    #[default]
    Concurrent,
    /// Clients are served one after another in client-id order.
    Sequential,
}

#[derive(Clone, Debug)]
pub struct CoordinatorConfig {
    pub plan: RoundPlan,
    pub arch: ArchitectureSpec,
    pub optim: OptimConfig,
    pub seed: u64,
    pub dispatch: Dispatch,
    pub registration_timeout: Duration,
}

impl CoordinatorConfig {
    pub fn new(plan: RoundPlan, arch: ArchitectureSpec, optim: OptimConfig, seed: u64) -> Self {
        Self {
            plan,
            arch,
            optim,
            seed,
            dispatch: Dispatch::Concurrent,
            registration_timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ServerState {
    pub phase: Phase,
    pub current_round: u32,
    pub global_weights: ModelWeights,
    pub registry: BTreeMap<String, NodeProfile>,
    pub ledger: Vec<RoundRecord>,
    pub missing: Vec<String>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug)]
pub struct SessionResult {
    pub weights: ModelWeights,
    pub ledger: Vec<RoundRecord>,
    pub summary: SessionSummary,
}

/// Scores the global model after a round: `(accuracy, loss)`.
pub type Evaluator<'a> = Box<dyn FnMut(u32, &ModelWeights) -> Option<(f64, f64)> + 'a>;

/// Synchronous round state machine.
pub struct Coordinator<'a> {
    config: CoordinatorConfig,
    state: ServerState,
    evaluator: Option<Evaluator<'a>>,
    started: Option<Instant>,
}

struct Received {
    client_id: String,
    outcome: Result<(ModelWeights, u64, ClientMetrics), String>,
    elapsed: Duration,
}

fn exchange<T: Transport + ?Sized>(
    transport: &mut T,
    client_id: &str,
    round: u32,
    down: &Message,
    deadline: Instant,
) -> Received {
    let sent = Instant::now();
    let outcome = (|| {
        transport.send(down).map_err(|e| e.to_string())?;
        let timeout = deadline.saturating_duration_since(Instant::now());
        match transport.recv(Some(timeout)) {
            Ok(Message::TrainResult {
                round: r,
                weights,
                sample_count,
                metrics,
            }) if r == round => Ok((weights, sample_count, metrics)),
            Ok(Message::TrainResult { round: r, .. }) => {
                Err(format!("answered round {r} during round {round}"))
            }
            Ok(Message::Finish { reason }) => Err(format!("client gave up: {reason}")),
            Ok(other) => Err(format!("unexpected {}", other.kind())),
            Err(WireError::Timeout(d)) => Err(format!("timed out after {:.3}s", d.as_secs_f64())),
            Err(e) => Err(e.to_string()),
        }
    })();
    Received {
        client_id: client_id.to_string(),
        outcome,
        elapsed: sent.elapsed(),
    }
}

impl<'a> Coordinator<'a> {
    pub fn new(config: CoordinatorConfig, initial: ModelWeights) -> Result<Self, CoordinatorError> {
        config.plan.validate()?;
        config.optim.validate()?;
        let net = crate::nn::ResidualNet::new(config.arch.clone())?;
        if initial.manifest_hash() != net.manifest_hash() {
            return Err(CoordinatorError::Config(
                "initial weights do not match the architecture".into(),
            ));
        }
        Ok(Self {
            config,
            state: ServerState {
                phase: Phase::AwaitRegistration,
                current_round: 0,
                global_weights: initial,
                registry: BTreeMap::new(),
                ledger: Vec::new(),
                missing: Vec::new(),
                failure: None,
            },
            evaluator: None,
            started: None,
        })
    }

    pub fn with_evaluator(mut self, evaluator: Evaluator<'a>) -> Self {
        self.evaluator = Some(evaluator);
        self
    }

    pub fn state(&self) -> &ServerState {
        &self.state
    }

    pub fn config(&self) -> &CoordinatorConfig {
        &self.config
    }

    fn fail(&mut self, reason: String, missing: Vec<String>) -> CoordinatorError {
        log::error!("session failed in round {}: {reason}", self.state.current_round);
        self.state.phase = Phase::Failed;
        self.state.failure = Some(reason.clone());
        self.state.missing = missing.clone();
        CoordinatorError::RoundFailed {
            round: self.state.current_round,
            missing,
            reason,
        }
    }

    /// Registration: every transport must open with a Register message.
    /// Returns the transport index of each client id.
    fn register<T: Transport>(
        &mut self,
        transports: &mut [T],
    ) -> Result<BTreeMap<String, usize>, CoordinatorError> {
        let mut index = BTreeMap::new();
        for (i, t) in transports.iter_mut().enumerate() {
            match t.recv(Some(self.config.registration_timeout)) {
                Ok(Message::Register { client_id, profile }) => {
                    if client_id != profile.client_id {
                        return Err(CoordinatorError::Registration(format!(
                            "client `{client_id}` registered a profile for `{}`",
                            profile.client_id
                        )));
                    }
                    profile
                        .validate()
                        .map_err(|e| CoordinatorError::Registration(e.to_string()))?;
                    if index.insert(client_id.clone(), i).is_some() {
                        return Err(CoordinatorError::Registration(format!(
                            "duplicate client id `{client_id}`"
                        )));
                    }
                    log::info!("registered {client_id} ({})", profile.device_class);
                    self.state.registry.insert(client_id, profile);
                }
                Ok(other) => {
                    return Err(CoordinatorError::Registration(format!(
                        "connection {i} opened with {} instead of Register",
                        other.kind()
                    )))
                }
                Err(e) => {
                    return Err(CoordinatorError::Registration(format!(
                        "connection {i}: {e}"
                    )))
                }
            }
        }
        Ok(index)
    }

    /// Registration, configuration, `R` rounds and a final Finish broadcast.
    ///
    /// On failure the state keeps the phase, the missing clients and every
    /// completed round for inspection.
    pub fn run_session<T: Transport>(
        &mut self,
        transports: &mut [T],
    ) -> Result<SessionResult, CoordinatorError> {
        if transports.is_empty() {
            return Err(CoordinatorError::Contract("a session needs at least one client".into()));
        }
        if self.state.phase != Phase::AwaitRegistration {
            return Err(CoordinatorError::Contract("session already ran".into()));
        }
        self.started = Some(Instant::now());
        let index = match self.register(transports) {
            Ok(ix) => ix,
            Err(e) => {
                self.state.phase = Phase::Failed;
                self.state.failure = Some(e.to_string());
                return Err(e);
            }
        };

        for (id, &i) in &index {
            let push = Message::ConfigPush(Box::new(SessionConfig {
                profile: self.state.registry[id].clone(),
                arch: self.config.arch.clone(),
                plan: self.config.plan.clone(),
                optim: self.config.optim.clone(),
                seed: self.config.seed,
            }));
            if let Err(e) = transports[i].send(&push) {
                return Err(self.fail(format!("config push to {id}: {e}"), vec![id.clone()]));
            }
        }

        let result = (0..self.config.plan.total_rounds).try_for_each(|_| self.run_round(transports, &index));
        let reason = match &result {
            Ok(()) => "session complete".to_string(),
            Err(e) => format!("session aborted: {e}"),
        };
        for &i in index.values() {
            let _ = transports[i].send(&Message::finish(reason.clone()));
        }
        result?;
        self.state.phase = Phase::Done;
        Ok(SessionResult {
            weights: self.state.global_weights.clone(),
            ledger: self.state.ledger.clone(),
            summary: self.summary(),
        })
    }

    /// Broadcast, barrier, aggregate, record.
    pub fn run_round<T: Transport>(
        &mut self,
        transports: &mut [T],
        index: &BTreeMap<String, usize>,
    ) -> Result<(), CoordinatorError> {
        let round = self.state.current_round;
        let session_start = *self.started.get_or_insert_with(Instant::now);
        self.state.phase = Phase::Broadcasting;
        let down = Message::WeightsDown {
            round,
            weights: self.state.global_weights.clone(),
        };
        let round_start = Instant::now();
        let deadline = round_start + self.config.plan.round_timeout;
        self.state.phase = Phase::AwaitResults;

        let mut received: Vec<Received> = Vec::with_capacity(index.len());
        match self.config.dispatch {
            Dispatch::Sequential => {
                for (id, &i) in index {
                    received.push(exchange(&mut transports[i], id, round, &down, deadline));
                }
            }
            Dispatch::Concurrent => {
                let (tx, rx) = mpsc::channel();
                let mut slots: Vec<Option<&mut T>> = transports.iter_mut().map(Some).collect();
                std::thread::scope(|s| {
                    for (id, &i) in index {
                        let t = slots[i].take().expect("each client has its own transport");
                        let (tx, down) = (tx.clone(), &down);
                        s.spawn(move || {
                            let _ = tx.send(exchange(t, id, round, down, deadline));
                        });
                    }
                });
                drop(tx);
                received.extend(rx);
            }
        }
        let barrier_done = round_start.elapsed();

        let mut failures: Vec<String> = Vec::new();
        let mut ok: BTreeMap<String, (ModelWeights, u64, ClientMetrics, Duration)> = BTreeMap::new();
        for r in received {
            match r.outcome {
                Ok((w, n, m)) => {
                    ok.insert(r.client_id, (w, n, m, r.elapsed));
                }
                Err(why) => failures.push(format!("{}: {why}", r.client_id)),
            }
        }
        if !failures.is_empty() {
            let missing = index.keys().filter(|id| !ok.contains_key(*id)).cloned().collect();
            return Err(self.fail(failures.join("; "), missing));
        }

        self.state.phase = Phase::Aggregating;
        let agg_start = Instant::now();
        let contributions: Vec<Contribution<'_>> = ok
            .iter()
            .map(|(id, (w, n, _, _))| Contribution {
                client_id: id,
                weights: w,
                n_k: *n,
            })
            .collect();
        let aggregated = match aggregate(&contributions, self.config.plan.aggregation) {
            Ok(w) => w,
            Err(e) => return Err(self.fail(e.to_string(), Vec::new())),
        };
        if aggregated.manifest_hash() != self.state.global_weights.manifest_hash() {
            let who = ok.keys().next().cloned().unwrap_or_default();
            return Err(self.fail(
                format!("results from {who} do not match the global manifest"),
                Vec::new(),
            ));
        }
        let aggregation_s = agg_start.elapsed().as_secs_f64();
        self.state.global_weights = aggregated;

        let eval = self
            .evaluator
            .as_mut()
            .and_then(|f| f(round, &self.state.global_weights))
            .map(|(accuracy, loss)| RoundEval { accuracy, loss });
        if let Some(e) = eval {
            let msg = Message::EvalResult {
                round,
                accuracy: e.accuracy,
                loss: e.loss,
            };
            for &i in index.values() {
                let _ = transports[i].send(&msg);
            }
        }

        let clients = ok
            .into_iter()
            .map(|(client_id, (_, n_k, m, elapsed))| ClientRoundEntry {
                client_id,
                n_k,
                duration_s: elapsed.as_secs_f64(),
                iters_per_s: m.iterations_per_second,
                steps: m.steps,
                epoch_losses: m.epoch_losses,
            })
            .collect();
        self.state.ledger.push(RoundRecord {
            round,
            started_at_s: round_start.duration_since(session_start).as_secs_f64(),
            clients,
            aggregation_s,
            duration_s: barrier_done.as_secs_f64() + aggregation_s,
            aggregation: self.config.plan.aggregation,
            eval,
        });
        log::info!(
            "round {}/{} done in {:.2}s",
            round + 1,
            self.config.plan.total_rounds,
            barrier_done.as_secs_f64() + aggregation_s
        );
        self.state.current_round += 1;
        self.state.phase = Phase::Broadcasting;
        Ok(())
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            phase: self.state.phase,
            total_rounds: self.config.plan.total_rounds,
            rounds_completed: self.state.ledger.len(),
            aggregation: self.config.plan.aggregation,
            clients: self.state.registry.values().cloned().collect(),
            total_wall_s: self.started.map_or(0.0, |s| s.elapsed().as_secs_f64()),
            final_eval: self.state.ledger.last().and_then(|r| r.eval),
            failure: self.state.failure.clone(),
            missing_clients: self.state.missing.clone(),
            rounds: self.state.ledger.clone(),
        }
    }
}
