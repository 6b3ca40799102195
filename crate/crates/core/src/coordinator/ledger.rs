use std::fmt::Write;

use serde::Serialize;

use super::{AggregationMode, Phase};
use crate::trainer::NodeProfile;

/// One client's part in one round.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClientRoundEntry {
    pub client_id: String,
    pub n_k: u64,
    /// Wall time from sending the round's weights to receiving the result.
    pub duration_s: f64,
    pub iters_per_s: f64,
    pub steps: u64,
    pub epoch_losses: Vec<f64>,
}

impl ClientRoundEntry {
    /// Mean loss of the last local epoch, or NaN if none was reported.
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RoundEval {
    pub accuracy: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: u32,
    /// Seconds from session start to the round's broadcast.
    pub started_at_s: f64,
    /// Sorted by client id; every registered client exactly once.
    pub clients: Vec<ClientRoundEntry>,
    pub aggregation_s: f64,
    /// Broadcast to aggregate done; never less than any client duration.
    pub duration_s: f64,
    pub aggregation: AggregationMode,
    pub eval: Option<RoundEval>,
}

impl RoundRecord {
    pub fn slowest_client(&self) -> Option<&ClientRoundEntry> {
        self.clients
            .iter()
            .max_by(|a, b| a.duration_s.total_cmp(&b.duration_s))
    }
}

/// JSON-friendly description of a finished or failed session.
#[derive(Clone, Debug, Serialize)]
pub struct SessionSummary {
    pub phase: Phase,
    pub total_rounds: u32,
    pub rounds_completed: usize,
    pub aggregation: AggregationMode,
    pub clients: Vec<NodeProfile>,
    pub total_wall_s: f64,
    pub final_eval: Option<RoundEval>,
    pub failure: Option<String>,
    pub missing_clients: Vec<String>,
    pub rounds: Vec<RoundRecord>,
}

pub const LEDGER_CSV_HEADER: &str = "round,client_id,n_k,duration_s,iters_per_s,loss";

/// One row per round per client.
pub fn ledger_csv(records: &[RoundRecord]) -> String {
    let mut out = String::from(LEDGER_CSV_HEADER);
    out.push('\n');
    for r in records {
        for c in &r.clients {
            writeln!(
                out,
                "{},{},{},{:.6},{:.4},{:.6}",
                r.round,
                c.client_id,
                c.n_k,
                c.duration_s,
                c.iters_per_s,
                c.final_loss()
            )
            .expect("writing to a String");
        }
    }
    out
}

pub fn session_json(summary: &SessionSummary) -> String {
    serde_json::to_string_pretty(summary).expect("summary is plain data")
}
