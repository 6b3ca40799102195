//! Self-contained training core: tensors, a compact residual classifier,
//! softmax cross-entropy, and momentum SGD with a plateau scheduler.

mod arch;
mod net;
mod ops;
mod optim;
mod tensor;
mod weights;

pub use arch::{ArchitectureSpec, StageSpec};
pub use net::{argmax, build_model, softmax_xent, Evaluation, ResidualNet};
pub use optim::{OptimConfig, OptimizerState, PlateauScheduler};
pub use tensor::Tensor;
pub use weights::{ManifestHash, ModelWeights};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("training diverged at batch index {batch_index} (loss {loss})")]
    Divergence { batch_index: usize, loss: f64 },
}
