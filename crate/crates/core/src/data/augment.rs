use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AugmentConfig, Sample, SiloDataset, Splits};
use crate::nn::Tensor;

/// One random rotate-and-crop: a square window of `crop_scale` times the
/// image side, centred at (`center_x`, `center_y`) in pixels, rotated by
/// `angle_deg` and resampled back to full size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VariantParams {
    pub angle_deg: f64,
    pub crop_scale: f64,
    pub center_x: f64,
    pub center_y: f64,
}

impl VariantParams {
    pub fn sample(cfg: &AugmentConfig, size: usize, rng: &mut impl Rng) -> Self {
        let angle_deg = if cfg.max_rotation_deg > 0.0 {
            rng.random_range(-cfg.max_rotation_deg..=cfg.max_rotation_deg)
        } else {
            0.0
        };
        let crop_scale = if cfg.max_crop_scale > cfg.min_crop_scale {
            rng.random_range(cfg.min_crop_scale..=cfg.max_crop_scale)
        } else {
            cfg.max_crop_scale
        };
        let side = crop_scale * size as f64;
        let half = side / 2.0;
        let lo = half;
        let hi = size as f64 - half;
        let center = |rng: &mut dyn rand::RngCore| {
            if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                size as f64 / 2.0
            }
        };
        let center_x = center(rng);
        let center_y = center(rng);
        Self {
            angle_deg,
            crop_scale,
            center_x,
            center_y,
        }
    }

    /// Crop window side length in pixels.
    pub fn crop_side(&self, size: usize) -> f64 {
        self.crop_scale * size as f64
    }

    /// Resamples a `[1, size, size]` image; outside pixels read as zero.
    pub fn apply(&self, image: &Tensor) -> Tensor {
        let size = image.shape()[1];
        let src = image.data();
        let side = self.crop_side(size);
        let (sin, cos) = self.angle_deg.to_radians().sin_cos();
        let mut out = Vec::with_capacity(size * size);
        for py in 0..size {
            for px in 0..size {
                let u = ((px as f64 + 0.5) / size as f64 - 0.5) * side;
                let v = ((py as f64 + 0.5) / size as f64 - 0.5) * side;
                let sx = self.center_x + cos * u - sin * v - 0.5;
                let sy = self.center_y + sin * u + cos * v - 0.5;
                out.push(bilinear(src, size, sx, sy).clamp(0.0, 1.0));
            }
        }
        Tensor::new(vec![1, size, size], out).expect("size x size buffer")
    }
}

fn bilinear(src: &[f32], size: usize, x: f64, y: f64) -> f32 {
    let x0 = x.floor();
    let y0 = y.floor();
    let (fx, fy) = ((x - x0) as f32, (y - y0) as f32);
    let px = |xx: f64, yy: f64| -> f32 {
        if xx < 0.0 || yy < 0.0 || xx >= size as f64 || yy >= size as f64 {
            0.0
        } else {
            src[yy as usize * size + xx as usize]
        }
    };
    let top = px(x0, y0) * (1.0 - fx) + px(x0 + 1.0, y0) * fx;
    let bottom = px(x0, y0 + 1.0) * (1.0 - fx) + px(x0 + 1.0, y0 + 1.0) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Adds `factor - 1` rotated/cropped variants of every original sample.
///
/// Variants keep their origin's `origin_id` and join the origin's split.
/// `factor == 1` returns the dataset unchanged.
pub fn augment(dataset: SiloDataset, factor: usize, cfg: &AugmentConfig, seed: u64) -> SiloDataset {
    if factor <= 1 {
        return dataset;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = dataset.input_size;
    let mut split_of = vec![None; dataset.samples.len()];
    for (k, list) in [
        &dataset.splits.train,
        &dataset.splits.val,
        &dataset.splits.test,
    ]
    .into_iter()
    .enumerate()
    {
        for &i in list {
            split_of[i] = Some(k);
        }
    }

    let mut samples = Vec::with_capacity(dataset.samples.len() * factor);
    let mut splits = Splits::default();
    let place = |splits: &mut Splits, idx: usize, k: Option<usize>| match k {
        Some(0) => splits.train.push(idx),
        Some(1) => splits.val.push(idx),
        Some(2) => splits.test.push(idx),
        _ => {}
    };
    for (i, original) in dataset.samples.into_iter().enumerate() {
        let is_original = original.transform.is_none();
        let image = original.image.clone();
        let (label, origin_id) = (original.label, original.origin_id);
        place(&mut splits, samples.len(), split_of[i]);
        samples.push(original);
        if !is_original {
            continue;
        }
        for _ in 1..factor {
            let params = VariantParams::sample(cfg, size, &mut rng);
            place(&mut splits, samples.len(), split_of[i]);
            samples.push(Sample {
                image: params.apply(&image),
                label,
                origin_id,
                transform: Some(params),
            });
        }
    }
    SiloDataset {
        silo_id: dataset.silo_id,
        input_size: size,
        samples,
        splits,
    }
}
