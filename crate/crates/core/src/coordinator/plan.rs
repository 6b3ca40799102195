use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::CoordinatorError;
use crate::sim::predict_round_time;
use crate::trainer::NodeProfile;

/// How client weights are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    /// Each client weighted by its sample count.
    #[default]
    Weighted,
    /// Every client weighted equally.
    Uniform,
}

impl AggregationMode {
    pub fn name(self) -> &'static str {
        match self {
            AggregationMode::Weighted => "weighted",
            AggregationMode::Uniform => "uniform",
        }
    }
}

/// Shape of a synchronous session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundPlan {
    pub total_rounds: u32,
    /// Wall-clock limit on one round's barrier wait.
    #[serde(with = "secs")]
    pub round_timeout: Duration,
    #[serde(default)]
    pub aggregation: AggregationMode,
}

impl Default for RoundPlan {
    fn default() -> Self {
        Self {
            total_rounds: 20,
            round_timeout: Duration::from_secs(600),
            aggregation: AggregationMode::Weighted,
        }
    }
}

impl RoundPlan {
    pub fn new(total_rounds: u32) -> Self {
        Self {
            total_rounds,
            ..Self::default()
        }
    }

    /// Ten times the slowest predicted client round time.
    pub fn default_timeout(clients: &[(NodeProfile, usize)]) -> Duration {
        let slowest = clients
            .iter()
            .map(|(p, n)| predict_round_time(p, *n, 0.0))
            .fold(0.0f64, f64::max);
        Duration::from_secs_f64((10.0 * slowest).max(1.0))
    }

    pub fn validate(&self) -> Result<(), CoordinatorError> {
        if self.total_rounds == 0 {
            return Err(CoordinatorError::Config("total_rounds must be at least 1".into()));
        }
        if self.round_timeout.is_zero() {
            return Err(CoordinatorError::Config("round_timeout must be positive".into()));
        }
        Ok(())
    }
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}
