//! Procedural stand-in for fetal plane images.
//!
//! Each class is a distinct family of shapes (filled ellipse with a dark
//! bubble, skull ring with midline, long bone, thin ring with a bright
//! blob). Each silo renders them through its own [`SiloStyle`], which makes
//! silos non-IID while the task stays learnable.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{augment, split, sub_seed, ClassLabel, DataError, Sample, SiloDataset, SiloSpec, SiloStyle};
use crate::nn::Tensor;

/// Generates, augments and splits one silo. Deterministic in `(spec, seed)`.
pub fn synth_silo(spec: &SiloSpec, seed: u64) -> Result<SiloDataset, DataError> {
    spec.validate()?;
    let mut samples = Vec::with_capacity(spec.originals());
    let mut origin = 0u64;
    for (&label, &count) in &spec.class_counts {
        for _ in 0..count {
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, &spec.silo_id, origin));
            let image = render(label, spec.input_size, &spec.style, &mut rng);
            samples.push(Sample {
                image,
                label,
                origin_id: origin,
                transform: None,
            });
            origin += 1;
        }
    }
    let ds = SiloDataset::unsplit(spec.silo_id.clone(), spec.input_size, samples);
    let ds = augment(
        ds,
        spec.augmentation_factor,
        &spec.augment,
        sub_seed(seed, &format!("{}/augment", spec.silo_id), 0),
    );
    split(
        ds,
        spec.train_fraction,
        spec.val_fraction,
        sub_seed(seed, &format!("{}/split", spec.silo_id), 0),
    )
}

/// Smooth inside-indicator for a signed distance (negative inside).
fn soft(dist: f64, edge: f64) -> f64 {
    (0.5 - dist / edge).clamp(0.0, 1.0)
}

fn ellipse_dist(u: f64, v: f64, a: f64, b: f64) -> f64 {
    (((u / a).powi(2) + (v / b).powi(2)).sqrt() - 1.0) * a.min(b)
}

fn circle_dist(u: f64, v: f64, cu: f64, cv: f64, r: f64) -> f64 {
    ((u - cu).powi(2) + (v - cv).powi(2)).sqrt() - r
}

fn segment_dist(u: f64, v: f64, half_len: f64, r: f64) -> f64 {
    let cu = u.clamp(-half_len, half_len);
    ((u - cu).powi(2) + v * v).sqrt() - r
}

/// Structure intensity in `[0, 1]` at shape-local coordinates.
fn structure(label: ClassLabel, u: f64, v: f64, r: f64, edge: f64) -> f64 {
    match label {
        ClassLabel::Abdomen => {
            let body = soft(ellipse_dist(u, v, r, 0.8 * r), edge);
            let bubble = soft(circle_dist(u, v, 0.35 * r, 0.1 * r, 0.22 * r), edge);
            0.75 * body * (1.0 - 0.85 * bubble)
        }
        ClassLabel::Brain => {
            let d = ellipse_dist(u, v, r, 0.78 * r);
            let ring = soft(d.abs() - 0.07 * r, edge);
            let inside = soft(d, edge);
            let midline = soft(v.abs() - 0.03 * r, edge) * soft(u.abs() - 0.8 * r, edge);
            (0.95 * ring).max(0.2 * inside).max(0.8 * midline * inside)
        }
        ClassLabel::Femur => {
            let shaft = soft(segment_dist(u, v, 0.75 * r, 0.09 * r), edge);
            let ends = soft(circle_dist(u, v, 0.75 * r, 0.0, 0.15 * r), edge)
                .max(soft(circle_dist(u, v, -0.75 * r, 0.0, 0.15 * r), edge));
            0.95 * shaft.max(ends)
        }
        ClassLabel::Thorax => {
            let ring = soft(circle_dist(u, v, 0.0, 0.0, 0.9 * r).abs() - 0.035 * r, edge);
            let heart = soft(circle_dist(u, v, -0.25 * r, 0.2 * r, 0.3 * r), edge);
            (0.7 * ring).max(0.9 * heart)
        }
    }
}

/// Renders one `[1, size, size]` image of `label` in the given style.
pub fn render(label: ClassLabel, size: usize, style: &SiloStyle, rng: &mut ChaCha8Rng) -> Tensor {
    let cx = rng.random_range(-0.15..0.15);
    let cy = rng.random_range(-0.15..0.15);
    let theta = rng.random_range(0.0..PI);
    let r = (rng.random_range(0.45..0.62) * style.scale).min(0.8);
    let (sin, cos) = theta.sin_cos();
    let edge = 2.5 / size as f64;
    let (ssin, scos) = style.stripe_angle.sin_cos();

    let mut img = vec![0.0f64; size * size];
    for py in 0..size {
        for px in 0..size {
            let x = (px as f64 + 0.5) / size as f64 * 2.0 - 1.0;
            let y = (py as f64 + 0.5) / size as f64 * 2.0 - 1.0;
            let (dx, dy) = (x - cx, y - cy);
            let u = cos * dx + sin * dy;
            let v = -sin * dx + cos * dy;
            let stripes = style.stripe_amplitude
                * (0.5 + 0.5 * (PI * style.stripe_frequency * (scos * x + ssin * y)).sin());
            img[py * size + px] = style.background + stripes + style.gain * structure(label, u, v, r, edge);
        }
    }

    if style.speckle > 0.0 {
        let speckle = Normal::new(0.0, 0.5 * style.speckle).expect("finite std");
        img.iter_mut().for_each(|p| *p *= 1.0 + speckle.sample(rng));
    }
    if style.blur > 0 {
        img = box_blur(&img, size, style.blur);
    }
    if style.noise > 0.0 {
        let noise = Normal::new(0.0, style.noise).expect("finite std");
        img.iter_mut().for_each(|p| *p += noise.sample(rng));
    }
    let data = img.into_iter().map(|p| p.clamp(0.0, 1.0) as f32).collect();
    Tensor::new(vec![1, size, size], data).expect("size x size buffer")
}

fn box_blur(img: &[f64], size: usize, radius: usize) -> Vec<f64> {
    let mut out = vec![0.0; img.len()];
    let r = radius as isize;
    for y in 0..size as isize {
        for x in 0..size as isize {
            let (mut acc, mut n) = (0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (yy, xx) = (y + dy, x + dx);
                    if yy >= 0 && xx >= 0 && yy < size as isize && xx < size as isize {
                        acc += img[yy as usize * size + xx as usize];
                        n += 1.0;
                    }
                }
            }
            out[y as usize * size + x as usize] = acc / n;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_in_range_and_class_dependent() {
        let style = SiloStyle::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = render(ClassLabel::Abdomen, 32, &style, &mut rng);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = render(ClassLabel::Femur, 32, &style, &mut rng);
        assert_eq!(a.shape(), &[1, 32, 32]);
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        // a filled body carries far more mass than a thin bone
        let mass = |t: &Tensor| t.data().iter().sum::<f32>();
        assert!(mass(&a) > 1.5 * mass(&f), "{} vs {}", mass(&a), mass(&f));
    }

    #[test]
    fn blur_preserves_constant_images() {
        let img = vec![0.3; 16];
        assert!(box_blur(&img, 4, 1).iter().all(|v| (v - 0.3).abs() < 1e-12));
    }
}
