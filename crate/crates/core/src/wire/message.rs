use crate::coordinator::RoundPlan;
use crate::nn::{ArchitectureSpec, ModelWeights, OptimConfig};
use crate::trainer::NodeProfile;

/// Performance figures a client reports with each round's result.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClientMetrics {
    pub iterations_per_second: f64,
    /// Mean training loss of each local epoch.
    pub epoch_losses: Vec<f64>,
    pub wall_time_s: f64,
    /// Optimizer steps taken this round.
    pub steps: u64,
}

/// Everything a client needs to take part in a session.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionConfig {
    pub profile: NodeProfile,
    pub arch: ArchitectureSpec,
    pub plan: RoundPlan,
    pub optim: OptimConfig,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Register {
        client_id: String,
        profile: NodeProfile,
    },
    ConfigPush(Box<SessionConfig>),
    WeightsDown {
        round: u32,
        weights: ModelWeights,
    },
    TrainResult {
        round: u32,
        weights: ModelWeights,
        sample_count: u64,
        metrics: ClientMetrics,
    },
    EvalResult {
        round: u32,
        accuracy: f64,
        loss: f64,
    },
    Finish {
        reason: String,
    },
}

impl Message {
    pub fn tag(&self) -> u8 {
        match self {
            Message::Register { .. } => 1,
            Message::ConfigPush(_) => 2,
            Message::WeightsDown { .. } => 3,
            Message::TrainResult { .. } => 4,
            Message::EvalResult { .. } => 5,
            Message::Finish { .. } => 6,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::Register { .. } => "Register",
            Message::ConfigPush(_) => "ConfigPush",
            Message::WeightsDown { .. } => "WeightsDown",
            Message::TrainResult { .. } => "TrainResult",
            Message::EvalResult { .. } => "EvalResult",
            Message::Finish { .. } => "Finish",
        }
    }

    pub fn finish(reason: impl Into<String>) -> Self {
        Message::Finish {
            reason: reason.into(),
        }
    }
}
