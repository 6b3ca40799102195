use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::coordinator::{AggregationMode, RoundPlan};
use crate::data::{AugmentConfig, ClassLabel, SiloSpec, SiloStyle, SILO_COUNTS};
use crate::nn::{ArchitectureSpec, OptimConfig};
use crate::trainer::{DeviceClass, NodeProfile, NODE_SPEEDS};

pub const FORMAT_VERSION: u32 = 1;

/// One silo and the node that holds it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiloEntry {
    pub id: String,
    /// Original images per class before augmentation.
    pub counts: BTreeMap<ClassLabel, usize>,
    #[serde(default = "one")]
    pub augmentation_factor: usize,
    pub epochs_per_round: usize,
    pub batch_size: usize,
    pub train_fraction: f64,
    #[serde(default = "default_val")]
    pub val_fraction: f64,
    pub device_class: DeviceClass,
    pub speed_iters_per_s: f64,
    /// Rendering style; the built-in style for `id` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<SiloStyle>,
}

fn one() -> usize {
    1
}

fn default_val() -> f64 {
    0.1
}

impl SiloEntry {
    pub fn spec(&self, input_size: usize, augment: &AugmentConfig) -> SiloSpec {
        SiloSpec {
            silo_id: self.id.clone(),
            class_counts: self.counts.clone(),
            augmentation_factor: self.augmentation_factor,
            train_fraction: self.train_fraction,
            val_fraction: self.val_fraction,
            input_size,
            augment: augment.clone(),
            style: self
                .style
                .clone()
                .unwrap_or_else(|| SiloStyle::for_silo(&self.id)),
        }
    }

    pub fn profile(&self) -> NodeProfile {
        NodeProfile {
            client_id: self.id.clone(),
            epochs_per_round: self.epochs_per_round,
            batch_size: self.batch_size,
            train_fraction: self.train_fraction,
            device_class: self.device_class,
            speed_iters_per_s: self.speed_iters_per_s,
        }
    }
}

/// Budget of the pooled-data baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentralizedConfig {
    pub epochs_per_round: usize,
    pub batch_size: usize,
}

/// A complete, self-describing experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub name: String,
    pub seed: u64,
    pub rounds: u32,
    #[serde(default)]
    pub aggregation: AggregationMode,
    pub arch: ArchitectureSpec,
    #[serde(default)]
    pub optim: OptimConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    pub centralized: CentralizedConfig,
    #[serde(rename = "silo")]
    pub silos: Vec<SiloEntry>,
}

impl ExperimentConfig {
    /// Six silos shaped like the per-country table at a size one CPU core
    /// trains in about two minutes: Spain cut to a tenth of its images,
    /// African silos augmented six-fold, a compact network, twenty rounds of
    /// two local epochs, and a learning rate of 0.02 with gradients clipped to
    /// norm 5, which the unnormalized network needs to train stably.
    pub fn desk() -> Self {
        let speeds: BTreeMap<&str, f64> = NODE_SPEEDS.iter().copied().collect();
        let silos = SILO_COUNTS
            .iter()
            .map(|(id, counts)| {
                let mut spec = SiloSpec::reference(id).expect("listed");
                if *id == "spain" {
                    spec = spec.with_total(counts.iter().sum::<usize>() / 10);
                }
                let profile = NodeProfile::measured(id).expect("listed");
                SiloEntry {
                    id: id.to_string(),
                    counts: spec.class_counts,
                    augmentation_factor: spec.augmentation_factor,
                    epochs_per_round: 2,
                    batch_size: profile.batch_size,
                    train_fraction: profile.train_fraction,
                    val_fraction: 0.1,
                    device_class: profile.device_class,
                    speed_iters_per_s: speeds[id],
                    style: None,
                }
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            name: "desk".into(),
            seed: 7,
            rounds: 20,
            aggregation: AggregationMode::Weighted,
            arch: ArchitectureSpec::desk(),
            optim: OptimConfig {
                learning_rate: 0.02,
                clip_norm: Some(5.0),
                ..OptimConfig::default()
            },
            augment: AugmentConfig::default(),
            centralized: CentralizedConfig {
                epochs_per_round: 2,
                batch_size: 8,
            },
            silos,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.format_version != FORMAT_VERSION {
            return bad(format!(
                "format_version {} not supported (expected {FORMAT_VERSION})",
                self.format_version
            ));
        }
        if self.silos.is_empty() {
            return bad("no silos".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.silos {
            if !seen.insert(&s.id) {
                return bad(format!("duplicate silo `{}`", s.id));
            }
            s.spec(self.arch.input_size, &self.augment).validate()?;
            s.profile().validate()?;
        }
        self.plan().validate()?;
        self.arch.validate()?;
        self.optim.validate()?;
        if self.centralized.epochs_per_round == 0 || self.centralized.batch_size == 0 {
            return bad("centralized epochs and batch size must be positive".into());
        }
        Ok(())
    }

    pub fn plan(&self) -> RoundPlan {
        RoundPlan {
            total_rounds: self.rounds,
            aggregation: self.aggregation,
            ..RoundPlan::default()
        }
    }

    pub fn silo_specs(&self) -> Vec<SiloSpec> {
        self.silos
            .iter()
            .map(|s| s.spec(self.arch.input_size, &self.augment))
            .collect()
    }

    pub fn profiles(&self) -> Vec<NodeProfile> {
        self.silos.iter().map(SiloEntry::profile).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; also returns the file's SHA-256.
    pub fn load(path: &Path) -> Result<(Self, String), ExperimentError> {
        let bytes = std::fs::read(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        Ok((Self::from_toml(&text)?, sha256_hex(&bytes)))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
