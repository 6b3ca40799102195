//! Synchronous federated averaging for heterogeneous, low-resource nodes.
//!
//! The crate bundles everything a federation needs to run on one desk or
//! across machines: a small training core ([`nn`]), synthetic and on-disk
//! silo data ([`data`]), the binary wire protocol and transports ([`wire`]),
//! the server round state machine ([`coordinator`]), the client runtime
//! ([`trainer`]), a virtual-clock simulator ([`sim`]) and the cross-silo
//! experiment driver ([`experiment`]).

pub mod coordinator;
pub mod data;
pub mod experiment;
pub mod nn;
pub mod sim;
pub mod trainer;
pub mod wire;

pub use coordinator::{aggregate, AggregationMode, RoundPlan, RoundRecord};
pub use data::{ClassLabel, SiloDataset, SiloSpec};
pub use nn::{ArchitectureSpec, ModelWeights, OptimConfig, Tensor};
pub use trainer::NodeProfile;
pub use wire::Message;
