use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TrainError;

/// Descriptive hardware class of a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceClass {
    Gpu,
    Cpu,
    Raspberry,
}

impl DeviceClass {
    pub fn name(self) -> &'static str {
        match self {
            DeviceClass::Gpu => "gpu",
            DeviceClass::Cpu => "cpu",
            DeviceClass::Raspberry => "raspberry",
        }
    }
}

impl fmt::Display for DeviceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DeviceClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gpu" => Ok(DeviceClass::Gpu),
            "cpu" => Ok(DeviceClass::Cpu),
            "raspberry" | "rpi" => Ok(DeviceClass::Raspberry),
            _ => Err(format!("unknown device class `{s}`")),
        }
    }
}

/// Per-client training configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeProfile {
    pub client_id: String,
    pub epochs_per_round: usize,
    pub batch_size: usize,
    pub train_fraction: f64,
    pub device_class: DeviceClass,
    /// Optimizer iterations per second, used only by the virtual clock.
    pub speed_iters_per_s: f64,
}

/// Measured speed column of the per-node performance table.
pub const NODE_SPEEDS: [(&str, f64); 6] = [
    ("spain", 15.6),
    ("malawi", 0.3),
    ("egypt", 2.5),
    ("uganda", 0.57),
    ("ghana", 0.67),
    ("algeria", 0.79),
];

impl NodeProfile {
    /// Standard node: 10 epochs, batch 8, 80% train data.
    pub fn new(client_id: &str) -> Self {
        Self {
            client_id: client_id.to_string(),
            epochs_per_round: 10,
            batch_size: 8,
            train_fraction: 0.8,
            device_class: DeviceClass::Cpu,
            speed_iters_per_s: 1.0,
        }
    }

    /// Single-board node with all three mitigations: 3 epochs, batch 2,
    /// 40% train data.
    pub fn raspberry(client_id: &str) -> Self {
        Self {
            epochs_per_round: 3,
            batch_size: 2,
            train_fraction: 0.4,
            device_class: DeviceClass::Raspberry,
            speed_iters_per_s: 0.3,
            ..Self::new(client_id)
        }
    }

    /// Profile of one of the six measured nodes.
    pub fn measured(client_id: &str) -> Option<Self> {
        let (_, speed) = NODE_SPEEDS.iter().find(|(id, _)| *id == client_id)?;
        let mut p = match client_id {
            "malawi" => Self::raspberry(client_id),
            "spain" => Self {
                device_class: DeviceClass::Gpu,
                ..Self::new(client_id)
            },
            _ => Self::new(client_id),
        };
        p.speed_iters_per_s = *speed;
        Some(p)
    }

    pub fn measured_all() -> Vec<Self> {
        NODE_SPEEDS
            .iter()
            .map(|(id, _)| Self::measured(id).expect("listed"))
            .collect()
    }

    /// The same node without the single-board mitigations.
    pub fn unmitigated(&self) -> Self {
        Self {
            epochs_per_round: 10,
            batch_size: 8,
            train_fraction: 0.8,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidProfile(format!("{}: {m}", self.client_id)));
        if self.client_id.is_empty() {
            return bad("empty client id".into());
        }
        if self.epochs_per_round == 0 {
            return bad("epochs_per_round must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return bad(format!("train_fraction {} outside (0, 1]", self.train_fraction));
        }
        if !(self.speed_iters_per_s > 0.0 && self.speed_iters_per_s.is_finite()) {
            return bad(format!("speed {} must be positive", self.speed_iters_per_s));
        }
        Ok(())
    }

    /// Optimizer steps in one round over `n_k` samples.
    pub fn steps_per_round(&self, n_k: usize) -> usize {
        self.epochs_per_round * n_k.div_ceil(self.batch_size)
    }
}
