use std::time::Duration;

use super::{local_train, NodeProfile, TrainError};
use crate::data::SiloDataset;
use crate::nn::{ModelWeights, OptimizerState, ResidualNet};
use crate::wire::{Message, SessionConfig, Transport, WireError};

/// What the client does after handling one message.
#[derive(Debug)]
pub enum Step {
    /// Nothing to send; wait for the next message.
    Idle,
    /// Send this and keep going.
    Reply(Message),
    /// Send this and stop (local failure reported to the server).
    Abort(Message),
    /// The server ended the session.
    Done(String),
}

struct Active {
    net: ResidualNet,
    config: SessionConfig,
    opt: OptimizerState,
}

/// Client-side protocol state machine, independent of any transport.
pub struct ClientSession {
    silo: SiloDataset,
    profile: NodeProfile,
    active: Option<Active>,
    last_weights: Option<ModelWeights>,
    rounds: Vec<u32>,
}

impl ClientSession {
    pub fn new(silo: SiloDataset, profile: NodeProfile) -> Result<Self, TrainError> {
        profile.validate()?;
        Ok(Self {
            silo,
            profile,
            active: None,
            last_weights: None,
            rounds: Vec::new(),
        })
    }

    pub fn client_id(&self) -> &str {
        &self.profile.client_id
    }

    pub fn register(&self) -> Message {
        Message::Register {
            client_id: self.profile.client_id.clone(),
            profile: self.profile.clone(),
        }
    }

    /// Weights returned in the most recent TrainResult.
    pub fn last_weights(&self) -> Option<&ModelWeights> {
        self.last_weights.as_ref()
    }

    /// Round numbers answered so far, in order.
    pub fn rounds(&self) -> &[u32] {
        &self.rounds
    }

    pub fn handle(&mut self, msg: Message) -> Result<Step, TrainError> {
        match msg {
            Message::ConfigPush(config) => {
                config.profile.validate()?;
                config.optim.validate()?;
                let net = ResidualNet::new(config.arch.clone())?;
                if net.spec().input_size != self.silo.input_size {
                    return Err(TrainError::Protocol(format!(
                        "architecture expects {}px inputs, silo `{}` has {}px",
                        net.spec().input_size,
                        self.silo.silo_id,
                        self.silo.input_size
                    )));
                }
                self.profile = config.profile.clone();
                let opt = OptimizerState::new(&config.optim);
                self.active = Some(Active {
                    net,
                    config: *config,
                    opt,
                });
                Ok(Step::Idle)
            }
            Message::WeightsDown { round, weights } => {
                let active = self
                    .active
                    .as_mut()
                    .ok_or_else(|| TrainError::Protocol("WeightsDown before ConfigPush".into()))?;
                if round >= active.config.plan.total_rounds {
                    return Err(TrainError::Protocol(format!(
                        "round {round} outside a {}-round plan",
                        active.config.plan.total_rounds
                    )));
                }
                match local_train(
                    &active.net,
                    weights,
                    &self.silo,
                    &self.profile,
                    &mut active.opt,
                    active.config.seed,
                    round,
                ) {
                    Ok(res) => {
                        self.last_weights = Some(res.weights.clone());
                        self.rounds.push(round);
                        Ok(Step::Reply(Message::TrainResult {
                            round,
                            weights: res.weights,
                            sample_count: res.n_k as u64,
                            metrics: res.metrics,
                        }))
                    }
                    Err(e @ TrainError::Divergence { .. }) => {
                        log::error!("{e}");
                        Ok(Step::Abort(Message::finish(e.to_string())))
                    }
                    Err(e) => Err(e),
                }
            }
            Message::EvalResult {
                round,
                accuracy,
                loss,
            } => {
                log::debug!(
                    "{}: global model after round {round}: accuracy {accuracy:.4}, loss {loss:.4}",
                    self.profile.client_id
                );
                Ok(Step::Idle)
            }
            Message::Finish { reason } => Ok(Step::Done(reason)),
            other => Err(TrainError::Protocol(format!(
                "client received unexpected {}",
                other.kind()
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ClientEnd {
    Finished(String),
    /// The connection dropped; last weights are kept.
    Disconnected(String),
    /// Local training diverged and the server was told.
    Aborted(String),
}

#[derive(Debug)]
pub struct ClientOutcome {
    pub end: ClientEnd,
    pub rounds: Vec<u32>,
    pub last_weights: Option<ModelWeights>,
}

/// Register, then answer ConfigPush and WeightsDown until Finish.
///
/// `idle_timeout` bounds each wait for the server (`None` waits forever).
pub fn client_loop<T: Transport + ?Sized>(
    transport: &mut T,
    mut session: ClientSession,
    idle_timeout: Option<Duration>,
) -> Result<ClientOutcome, TrainError> {
    let outcome = |session: ClientSession, end| ClientOutcome {
        end,
        rounds: session.rounds,
        last_weights: session.last_weights,
    };
    if let Err(e) = transport.send(&session.register()) {
        return lost_or(e, session, outcome);
    }
    loop {
        let msg = match transport.recv(idle_timeout) {
            Ok(m) => m,
            Err(e) => return lost_or(e, session, outcome),
        };
        match session.handle(msg) {
            Ok(Step::Idle) => {}
            Ok(Step::Reply(m)) => {
                if let Err(e) = transport.send(&m) {
                    return lost_or(e, session, outcome);
                }
            }
            Ok(Step::Abort(m)) => {
                let reason = match &m {
                    Message::Finish { reason } => reason.clone(),
                    _ => String::new(),
                };
                let _ = transport.send(&m);
                return Ok(outcome(session, ClientEnd::Aborted(reason)));
            }
            Ok(Step::Done(reason)) => return Ok(outcome(session, ClientEnd::Finished(reason))),
            Err(e) => {
                let _ = transport.send(&Message::finish(format!("client error: {e}")));
                return Err(e);
            }
        }
    }
}

fn lost_or(
    e: WireError,
    session: ClientSession,
    outcome: impl FnOnce(ClientSession, ClientEnd) -> ClientOutcome,
) -> Result<ClientOutcome, TrainError> {
    match e {
        WireError::ConnectionLost(why) => {
            log::warn!("{}: connection lost ({why}); keeping last weights", session.client_id());
            Ok(outcome(session, ClientEnd::Disconnected(why)))
        }
        other => Err(other.into()),
    }
}
