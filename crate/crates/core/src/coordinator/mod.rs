//! Server side: synchronous rounds, federated averaging and the round ledger.

mod aggregate;
mod ledger;
mod plan;
mod server;

pub use aggregate::{aggregate, Contribution};
pub use ledger::{
    ledger_csv, session_json, ClientRoundEntry, RoundEval, RoundRecord, SessionSummary,
    LEDGER_CSV_HEADER,
};
pub use plan::{AggregationMode, RoundPlan};
pub use server::{
    Coordinator, CoordinatorConfig, Dispatch, Evaluator, Phase, ServerState, SessionResult,
};

use crate::nn::NnError;
use crate::wire::WireError;

#[derive(Debug, thiserror::Error)]
pub enum CoordinatorError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("registration failed: {0}")]
    Registration(String),
    #[error("cannot aggregate result from `{client_id}`: {reason}")]
    Aggregation { client_id: String, reason: String },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("round {round} failed ({reason}); missing: {missing:?}")]
    RoundFailed {
        round: u32,
        missing: Vec<String>,
        reason: String,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Wire(#[from] WireError),
}
