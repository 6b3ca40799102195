//! Client runtime: node profiles, local rounds and the client protocol loop.

mod client;
mod local;
mod loopback;
mod profile;

pub use client::{client_loop, ClientEnd, ClientOutcome, ClientSession, Step};
pub use local::{local_train, shuffle_seed, LocalRoundResult};
pub use loopback::LoopbackClient;
pub use profile::{DeviceClass, NodeProfile, NODE_SPEEDS};

use crate::nn::NnError;
use crate::wire::WireError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid node profile: {0}")]
    InvalidProfile(String),
    #[error("silo `{0}` has an empty train split")]
    EmptyTrainSplit(String),
    #[error("{client_id}: training diverged in round {round}, epoch {epoch}, batch {batch} (loss {loss})")]
    Divergence {
        client_id: String,
        round: u32,
        epoch: usize,
        batch: usize,
        loss: f64,
    },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Wire(#[from] WireError),
}
