use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use super::SimError;

/// Virtual timing of one round.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimRound {
    pub round: u32,
    /// Virtual seconds each client spent, by client id.
    pub client_s: BTreeMap<String, f64>,
    pub slowest: String,
    pub aggregation_s: f64,
    /// Slowest client time plus aggregation cost.
    pub duration_s: f64,
    /// Mean test accuracy of the global model across silos, if evaluated.
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SimReport {
    pub rounds: Vec<SimRound>,
    pub total_virtual_s: f64,
}

impl SimReport {
    pub fn accuracy_curve(&self) -> Vec<f64> {
        self.rounds.iter().filter_map(|r| r.accuracy).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,client_id,virtual_s,slowest,round_s\n");
        for r in &self.rounds {
            for (id, t) in &r.client_s {
                writeln!(
                    out,
                    "{},{},{:.3},{},{:.3}",
                    r.round,
                    id,
                    t,
                    u8::from(*id == r.slowest),
                    r.duration_s
                )
                .expect("writing to a String");
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StragglerRow {
    pub client_id: String,
    pub mean_round_s: f64,
    /// Fraction of rounds in which this client was the slowest.
    pub slowest_share: f64,
    /// Mean round time relative to the fastest client's.
    pub slowdown: f64,
}

pub fn straggler_report(report: &SimReport) -> Result<Vec<StragglerRow>, SimError> {
    if report.rounds.is_empty() {
        return Err(SimError::Contract("straggler report of an empty simulation".into()));
    }
    let mut sums: BTreeMap<&str, (f64, usize, usize)> = BTreeMap::new();
    for r in &report.rounds {
        for (id, t) in &r.client_s {
            let e = sums.entry(id).or_default();
            e.0 += t;
            e.1 += 1;
            if *id == r.slowest {
                e.2 += 1;
            }
        }
    }
    let n_rounds = report.rounds.len() as f64;
    let means: Vec<(&str, f64, f64)> = sums
        .iter()
        .map(|(id, (s, n, slow))| (*id, s / *n as f64, *slow as f64 / n_rounds))
        .collect();
    let fastest = means.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    Ok(means
        .into_iter()
        .map(|(id, mean, share)| StragglerRow {
            client_id: id.to_string(),
            mean_round_s: mean,
            slowest_share: share,
            slowdown: mean / fastest,
        })
        .collect())
}

pub fn straggler_csv(rows: &[StragglerRow]) -> String {
    let mut out = String::from("client_id,mean_round_s,slowest_share,slowdown\n");
    for r in rows {
        writeln!(
            out,
            "{},{:.3},{:.4},{:.4}",
            r.client_id, r.mean_round_s, r.slowest_share, r.slowdown
        )
        .expect("writing to a String");
    }
    out
}
