//! Fixtures shared by the benchmarks.

use fedkit::nn::{build_model, ArchitectureSpec, ResidualNet, StageSpec};
use fedkit::{ModelWeights, Tensor};

/// The desk classifier at the given input size.
pub fn arch(input_size: usize) -> ArchitectureSpec {
    ArchitectureSpec {
        input_size,
        channels: 1,
        num_classes: 4,
        stem_stride: 1,
        stages: vec![StageSpec { blocks: 1, width: 8 }, StageSpec { blocks: 1, width: 16 }],
    }
}

pub fn model(input_size: usize) -> (ResidualNet, ModelWeights) {
    let spec = arch(input_size);
    let weights = build_model(&spec, 1).expect("valid architecture");
    (ResidualNet::new(spec).expect("valid architecture"), weights)
}

/// A deterministic batch of `n` single-channel images with labels.
pub fn batch(n: usize, input_size: usize) -> (Tensor, Vec<usize>) {
    let len = n * input_size * input_size;
    let data = (0..len).map(|i| ((i * 7919) % 1000) as f32 / 1000.0).collect();
    let images = Tensor::new(vec![n, 1, input_size, input_size], data).expect("shape matches");
    (images, (0..n).map(|i| i % 4).collect())
}
