//! The eight-model cross-silo experiment: six local baselines, one model on
//! pooled data and one federated model, scored on every silo's test split.

mod config;
mod matrix;
mod output;
mod plot;
mod run;

use std::path::PathBuf;

pub use config::{sha256_hex, CentralizedConfig, ExperimentConfig, SiloEntry, FORMAT_VERSION};
pub use matrix::{CrossEvalMatrix, MatrixSummary};
pub use output::{curves_csv, parse_curves_csv, replot, write_outputs};
pub use plot::{curves_svg, matrix_svg};
pub use run::{
    merged_train, prepare, run_experiment, train_centralized, train_federated, train_locals,
    ExperimentResult, FederatedRun, ModelRun,
};

use crate::coordinator::CoordinatorError;
use crate::data::DataError;
use crate::nn::NnError;
use crate::sim::SimError;
use crate::trainer::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("cannot parse: {0}")]
    Parse(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Coordinator(#[from] CoordinatorError),
    #[error(transparent)]
    Sim(#[from] SimError),
}
