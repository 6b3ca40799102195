//! One-process federations on a virtual clock.
//!
//! Each client's round time is its optimizer step count divided by its
//! profile speed, so straggler behaviour is reproducible on any machine and
//! independent of how fast the host really is.

mod report;
mod run;

pub use report::{straggler_csv, straggler_report, SimReport, SimRound, StragglerRow};
pub use run::{prepare_silos, run_simulation, simulate, SimClient, SimOptions, SimOutput};

use crate::coordinator::CoordinatorError;
use crate::data::DataError;
use crate::trainer::{NodeProfile, TrainError};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Coordinator(#[from] CoordinatorError),
}

/// `E * ceil(n / B) / speed + overhead`, in seconds.
pub fn predict_round_time(profile: &NodeProfile, n_k: usize, overhead_s: f64) -> f64 {
    profile.steps_per_round(n_k) as f64 / profile.speed_iters_per_s + overhead_s
}
