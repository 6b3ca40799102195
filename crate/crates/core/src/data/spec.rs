use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ClassLabel, DataError};

/// Per-image counts of the four kept planes for each country, before
/// augmentation. The "other" plane (Spain only) is not listed.
pub const SILO_COUNTS: [(&str, [usize; 4]); 6] = [
    ("spain", [711, 1781, 1040, 1718]),
    ("malawi", [25, 25, 25, 25]),
    ("egypt", [25, 25, 25, 25]),
    ("uganda", [25, 25, 25, 0]),
    ("ghana", [25, 25, 25, 0]),
    ("algeria", [25, 25, 25, 25]),
];

/// Random augmentation ranges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub max_rotation_deg: f64,
    pub min_crop_scale: f64,
    pub max_crop_scale: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            max_rotation_deg: 25.0,
            min_crop_scale: 0.8,
            max_crop_scale: 1.0,
        }
    }
}

/// Acquisition style of a silo's synthetic images. Silos with different
/// styles see the same anatomy through different "scanners".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SiloStyle {
    /// Multiplier on structure brightness.
    pub gain: f64,
    /// Background intensity.
    pub background: f64,
    /// Std of additive Gaussian noise.
    pub noise: f64,
    /// Strength of multiplicative speckle.
    pub speckle: f64,
    /// Box-blur radius in pixels.
    pub blur: usize,
    /// Amplitude, spatial frequency (cycles per image) and angle of a
    /// background stripe texture.
    pub stripe_amplitude: f64,
    pub stripe_frequency: f64,
    pub stripe_angle: f64,
    /// Multiplier on structure size.
    pub scale: f64,
}

impl Default for SiloStyle {
    fn default() -> Self {
        Self {
            gain: 1.0,
            background: 0.05,
            noise: 0.05,
            speckle: 0.2,
            blur: 0,
            stripe_amplitude: 0.0,
            stripe_frequency: 3.0,
            stripe_angle: 0.0,
            scale: 1.0,
        }
    }
}

impl SiloStyle {
    /// Built-in style for the six known silos; other ids get a style derived
    /// from a hash of the id.
    pub fn for_silo(silo_id: &str) -> Self {
        let base = SiloStyle::default();
        match silo_id {
            "spain" => base,
            "malawi" => SiloStyle {
                gain: 0.75,
                background: 0.2,
                noise: 0.1,
                speckle: 0.35,
                stripe_amplitude: 0.08,
                stripe_frequency: 4.0,
                stripe_angle: 0.4,
                scale: 0.9,
                ..base
            },
            "egypt" => SiloStyle {
                gain: 0.85,
                background: 0.12,
                noise: 0.08,
                blur: 1,
                scale: 0.8,
                ..base
            },
            "uganda" => SiloStyle {
                gain: 0.75,
                background: 0.18,
                noise: 0.12,
                speckle: 0.3,
                stripe_amplitude: 0.06,
                stripe_frequency: 2.5,
                stripe_angle: 1.2,
                scale: 1.1,
                ..base
            },
            "ghana" => SiloStyle {
                gain: 0.9,
                background: 0.0,
                noise: 0.2,
                speckle: 0.5,
                scale: 1.2,
                ..base
            },
            "algeria" => SiloStyle {
                gain: 0.7,
                background: 0.18,
                noise: 0.1,
                blur: 1,
                stripe_amplitude: 0.08,
                stripe_frequency: 5.0,
                stripe_angle: 2.0,
                ..base
            },
            other => {
                let h: [u8; 32] = Sha256::digest(other.as_bytes()).into();
                let u = |i: usize| h[i] as f64 / 255.0;
                SiloStyle {
                    gain: 0.5 + 0.5 * u(0),
                    background: 0.35 * u(1),
                    noise: 0.04 + 0.14 * u(2),
                    speckle: 0.5 * u(3),
                    blur: (h[4] % 2) as usize,
                    stripe_amplitude: 0.15 * u(5),
                    stripe_frequency: 2.0 + 4.0 * u(6),
                    stripe_angle: std::f64::consts::PI * u(7),
                    scale: 0.8 + 0.4 * u(8),
                }
            }
        }
    }
}

/// Everything needed to generate (or describe) one silo.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiloSpec {
    pub silo_id: String,
    /// Original image count per class, before augmentation.
    pub class_counts: BTreeMap<ClassLabel, usize>,
    #[serde(default = "one")]
    pub augmentation_factor: usize,
    pub train_fraction: f64,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    pub input_size: usize,
    #[serde(default)]
    pub augment: AugmentConfig,
    pub style: SiloStyle,
}

fn one() -> usize {
    1
}

fn default_val_fraction() -> f64 {
    0.1
}

impl SiloSpec {
    /// A silo with the given per-class counts (in [`ClassLabel::ALL`] order)
    /// and the built-in style for `silo_id`.
    pub fn new(silo_id: &str, counts: [usize; 4]) -> Self {
        Self {
            silo_id: silo_id.to_string(),
            class_counts: ClassLabel::ALL.into_iter().zip(counts).collect(),
            augmentation_factor: 1,
            train_fraction: 0.8,
            val_fraction: default_val_fraction(),
            input_size: 32,
            augment: AugmentConfig::default(),
            style: SiloStyle::for_silo(silo_id),
        }
    }

    /// Full-size silo from the per-country table: African silos augmented
    /// six-fold, Malawi (the single-board node) training on 40%.
    pub fn reference(silo_id: &str) -> Option<Self> {
        let (_, counts) = SILO_COUNTS.iter().find(|(id, _)| *id == silo_id)?;
        let mut spec = Self::new(silo_id, *counts);
        if silo_id != "spain" {
            spec.augmentation_factor = 6;
        }
        if silo_id == "malawi" {
            spec.train_fraction = 0.4;
        }
        Some(spec)
    }

    /// All six table silos, in table order.
    pub fn reference_all() -> Vec<Self> {
        SILO_COUNTS
            .iter()
            .map(|(id, _)| Self::reference(id).expect("listed"))
            .collect()
    }

    /// Rescales class counts to `total` originals, keeping proportions
    /// (largest-remainder rounding, zero classes stay zero).
    pub fn with_total(mut self, total: usize) -> Self {
        let current: usize = self.class_counts.values().sum();
        if current == 0 {
            return self;
        }
        let quotas: Vec<(ClassLabel, f64)> = self
            .class_counts
            .iter()
            .map(|(c, n)| (*c, *n as f64 * total as f64 / current as f64))
            .collect();
        let alloc = largest_remainder(&quotas.iter().map(|(_, q)| *q).collect::<Vec<_>>(), total);
        for ((c, _), n) in quotas.iter().zip(alloc) {
            self.class_counts.insert(*c, n);
        }
        self
    }

    pub fn originals(&self) -> usize {
        self.class_counts.values().sum()
    }

    pub fn total_samples(&self) -> usize {
        self.originals() * self.augmentation_factor
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::InvalidSpec(format!("{}: {msg}", self.silo_id)));
        if self.silo_id.is_empty() {
            return bad("empty silo id".into());
        }
        if self.augmentation_factor == 0 {
            return bad("augmentation_factor must be at least 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return bad(format!("train_fraction {} outside (0, 1]", self.train_fraction));
        }
        if !(self.val_fraction >= 0.0 && self.train_fraction + self.val_fraction <= 1.0) {
            return bad(format!(
                "val_fraction {} incompatible with train_fraction {}",
                self.val_fraction, self.train_fraction
            ));
        }
        if self.input_size < 4 {
            return bad(format!("input_size {} too small", self.input_size));
        }
        if self.originals() == 0 {
            return bad("no images".into());
        }
        let a = &self.augment;
        if !(0.0 < a.min_crop_scale && a.min_crop_scale <= a.max_crop_scale && a.max_crop_scale <= 1.0)
        {
            return bad(format!(
                "crop scale range [{}, {}] invalid",
                a.min_crop_scale, a.max_crop_scale
            ));
        }
        if !(a.max_rotation_deg >= 0.0) {
            return bad("max_rotation_deg must be non-negative".into());
        }
        Ok(())
    }
}

/// Integer allocation of `total` proportional to `quotas` (which should sum
/// to about `total`): floors first, then the largest fractional parts, ties
/// to the lower index.
pub(crate) fn largest_remainder(quotas: &[f64], total: usize) -> Vec<usize> {
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        alloc[i] += 1;
    }
    alloc
}
