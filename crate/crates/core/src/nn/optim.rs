use serde::{Deserialize, Serialize};

use super::{ManifestHash, ModelWeights, NnError};

/// SGD and plateau-scheduler hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
    /// Relative decrease a metric must achieve to count as an improvement.
    pub threshold: f64,
    /// Rescales each step's gradient so its global L2 norm is at most this.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            patience: 3,
            factor: 0.5,
            min_lr: 1e-4,
            threshold: 1e-3,
            clip_norm: None,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::Config(format!(
                "learning_rate must be finite and positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(NnError::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(NnError::Config(format!(
                "factor must lie in (0, 1), got {}",
                self.factor
            )));
        }
        if !(self.min_lr >= 0.0) || !(self.threshold >= 0.0) {
            return Err(NnError::Config(
                "min_lr and threshold must be non-negative".into(),
            ));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(NnError::Config(format!(
                    "clip_norm must be finite and positive, got {c}"
                )));
            }
        }
        Ok(())
    }
}

/// Reduce-on-plateau learning-rate schedule driven by a loss-like metric.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauScheduler {
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
    pub threshold: f64,
    pub best_metric: f64,
    pub stale_count: usize,
}

impl PlateauScheduler {
    pub fn new(patience: usize, factor: f64, min_lr: f64, threshold: f64) -> Self {
        Self {
            patience,
            factor,
            min_lr,
            threshold,
            best_metric: f64::INFINITY,
            stale_count: 0,
        }
    }

    /// Feeds one metric value and returns the learning rate to use next.
    ///
    /// A report counts as an improvement when it beats the best value seen so
    /// far by at least `threshold` relative. After `patience` consecutive
    /// non-improving reports the rate is multiplied by `factor`, floored at
    /// `min_lr`, and the stale counter starts over.
    pub fn report(&mut self, metric: f64, lr: f64) -> f64 {
        let bar = if self.best_metric.is_finite() {
            self.best_metric - self.best_metric.abs() * self.threshold
        } else {
            f64::INFINITY
        };
        if metric < bar {
            self.best_metric = metric;
            self.stale_count = 0;
            return lr;
        }
        self.stale_count += 1;
        if self.stale_count >= self.patience {
            self.stale_count = 0;
            let reduced = (lr * self.factor).max(self.min_lr);
            // never raise a rate that already sits below the floor
            return reduced.min(lr);
        }
        lr
    }

    /// Forgets the best metric so comparisons restart, keeping the rate.
    pub fn reset_comparisons(&mut self) {
        self.best_metric = f64::INFINITY;
        self.stale_count = 0;
    }
}

/// Momentum SGD state: learning rate, velocity buffers, scheduler.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub momentum: f64,
    pub scheduler: PlateauScheduler,
    pub clip_norm: Option<f64>,
    velocity: Vec<Vec<f32>>,
    velocity_manifest: Option<ManifestHash>,
}

impl OptimizerState {
    pub fn new(config: &OptimConfig) -> Self {
        Self {
            learning_rate: config.learning_rate,
            momentum: config.momentum,
            scheduler: PlateauScheduler::new(
                config.patience,
                config.factor,
                config.min_lr,
                config.threshold,
            ),
            clip_norm: config.clip_norm,
            velocity: Vec::new(),
            velocity_manifest: None,
        }
    }

    pub fn report_metric(&mut self, metric: f64) {
        self.learning_rate = self.scheduler.report(metric, self.learning_rate);
    }

    /// `v = momentum * v + g; w = w - lr * v`, tensor by tensor, with `g`
    /// first scaled down to `clip_norm` when set.
    pub(crate) fn apply(&mut self, weights: &mut ModelWeights, grads: &ModelWeights) {
        if self.velocity_manifest != Some(weights.manifest_hash()) {
            self.velocity = weights
                .entries()
                .iter()
                .map(|(_, t)| vec![0.0; t.len()])
                .collect();
            self.velocity_manifest = Some(weights.manifest_hash());
        }
        let lr = self.learning_rate as f32;
        let mu = self.momentum as f32;
        let scale = match self.clip_norm {
            Some(c) => {
                let norm = grads
                    .entries()
                    .iter()
                    .flat_map(|(_, t)| t.data())
                    .map(|&g| f64::from(g) * f64::from(g))
                    .sum::<f64>()
                    .sqrt();
                if norm > c { (c / norm) as f32 } else { 1.0 }
            }
            None => 1.0,
        };
        for (i, vel) in self.velocity.iter_mut().enumerate() {
            let g = grads.tensor(i).data();
            let w = weights.tensor_mut(i).data_mut();
            for ((w, v), g) in w.iter_mut().zip(vel.iter_mut()).zip(g) {
                *v = mu * *v + scale * g;
                *w -= lr * *v;
            }
        }
    }
}
