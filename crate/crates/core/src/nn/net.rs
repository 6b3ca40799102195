use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ops::{gemm, ConvGeom, Mat};
use super::{ArchitectureSpec, ManifestHash, ModelWeights, NnError, OptimizerState, Tensor};

/// Scale applied to the He-initialised head so initial logits sit near zero.
const HEAD_INIT_SCALE: f32 = 0.1;
/// Scale on the last convolution of each residual branch, keeping the
/// un-normalised skip sum from growing with depth at init.
const BRANCH_INIT_SCALE: f32 = 0.5;

const EVAL_CHUNK: usize = 64;

#[derive(Clone, Debug)]
struct Conv {
    geom: ConvGeom,
    weight: usize,
    bias: usize,
}

#[derive(Clone, Debug)]
struct Block {
    conv1: Conv,
    conv2: Conv,
    proj: Option<Conv>,
}

/// Accuracy and mean cross-entropy over a labelled set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
    pub correct: usize,
    pub total: usize,
}

/// Compact residual image classifier bound to one [`ArchitectureSpec`].
#[derive(Clone, Debug)]
pub struct ResidualNet {
    spec: ArchitectureSpec,
    stem: Conv,
    blocks: Vec<Block>,
    head_weight: usize,
    head_bias: usize,
    features: usize,
    final_hw: usize,
    layout: Vec<(String, Vec<usize>)>,
    manifest: ManifestHash,
}

struct Trace {
    /// Post-ReLU output of the stem, then of every block.
    acts: Vec<Vec<f32>>,
    /// Post-ReLU output of each block's first convolution.
    hidden: Vec<Vec<f32>>,
    features: Vec<f32>,
    logits: Vec<f32>,
}

impl ResidualNet {
    pub fn new(spec: ArchitectureSpec) -> Result<Self, NnError> {
        spec.validate()?;
        let mut layout: Vec<(String, Vec<usize>)> = Vec::new();
        let push_conv = |layout: &mut Vec<(String, Vec<usize>)>, name: &str, geom: ConvGeom| {
            let weight = layout.len();
            layout.push((format!("{name}.weight"), geom.weight_shape()));
            layout.push((format!("{name}.bias"), vec![geom.out_c]));
            Conv {
                geom,
                weight,
                bias: weight + 1,
            }
        };

        let stem_geom = ConvGeom::new(
            spec.channels,
            spec.stages[0].width,
            3,
            spec.stem_stride,
            spec.input_size,
        );
        let stem = push_conv(&mut layout, "stem", stem_geom);
        let mut hw = stem_geom.out_hw;
        let mut width = stem_geom.out_c;
        let mut blocks = Vec::new();
        for (s, stage) in spec.stages.iter().enumerate() {
            for b in 0..stage.blocks {
                let stride = if s > 0 && b == 0 { 2 } else { 1 };
                let prefix = format!("stage{s}.block{b}");
                let g1 = ConvGeom::new(width, stage.width, 3, stride, hw);
                let conv1 = push_conv(&mut layout, &format!("{prefix}.conv1"), g1);
                let g2 = ConvGeom::new(stage.width, stage.width, 3, 1, g1.out_hw);
                let conv2 = push_conv(&mut layout, &format!("{prefix}.conv2"), g2);
                let proj = (stride != 1 || width != stage.width).then(|| {
                    let gp = ConvGeom::new(width, stage.width, 1, stride, hw);
                    push_conv(&mut layout, &format!("{prefix}.proj"), gp)
                });
                blocks.push(Block { conv1, conv2, proj });
                hw = g1.out_hw;
                width = stage.width;
            }
        }
        let head_weight = layout.len();
        layout.push(("head.weight".into(), vec![spec.num_classes, width]));
        layout.push(("head.bias".into(), vec![spec.num_classes]));

        let manifest = ModelWeights::new(
            layout
                .iter()
                .map(|(n, s)| (n.clone(), Tensor::zeros(s.clone())))
                .collect(),
        )?
        .manifest_hash();

        Ok(Self {
            spec,
            stem,
            blocks,
            head_weight,
            head_bias: head_weight + 1,
            features: width,
            final_hw: hw,
            layout,
            manifest,
        })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn manifest_hash(&self) -> ManifestHash {
        self.manifest
    }

    pub fn input_len(&self) -> usize {
        self.spec.channels * self.spec.input_size * self.spec.input_size
    }

    /// Deterministic He-normal initialisation; biases start at zero.
    pub fn init(&self, seed: u64) -> ModelWeights {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let branch_tails: Vec<usize> = self.blocks.iter().map(|b| b.conv2.weight).collect();
        let entries = self
            .layout
            .iter()
            .enumerate()
            .map(|(i, (name, shape))| {
                let mut t = Tensor::zeros(shape.clone());
                if name.ends_with(".weight") {
                    let fan_in: usize = shape[1..].iter().product();
                    let mut std = (2.0 / fan_in as f32).sqrt();
                    if i == self.head_weight {
                        std *= HEAD_INIT_SCALE;
                    } else if branch_tails.contains(&i) {
                        std *= BRANCH_INIT_SCALE;
                    }
                    let normal = Normal::new(0.0f32, std).expect("positive std");
                    t.data_mut().iter_mut().for_each(|v| *v = normal.sample(&mut rng));
                }
                (name.clone(), t)
            })
            .collect();
        ModelWeights::new(entries).expect("layout names are unique")
    }

    fn check_weights(&self, weights: &ModelWeights) -> Result<(), NnError> {
        if weights.manifest_hash() != self.manifest {
            return Err(NnError::Contract(format!(
                "weights manifest {} does not match architecture manifest {}",
                weights.manifest_hash(),
                self.manifest
            )));
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize, NnError> {
        let s = &self.spec;
        let expected = [s.channels, s.input_size, s.input_size];
        if batch.shape().len() != 4 || batch.shape()[1..] != expected {
            return Err(NnError::Contract(format!(
                "batch shape {:?} does not match [N, {}, {}, {}]",
                batch.shape(),
                s.channels,
                s.input_size,
                s.input_size
            )));
        }
        Ok(batch.shape()[0])
    }

    fn check_labels(&self, labels: &[usize], n: usize) -> Result<(), NnError> {
        if labels.len() != n {
            return Err(NnError::Contract(format!(
                "{} labels for a batch of {n}",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= self.spec.num_classes) {
            return Err(NnError::Contract(format!(
                "label {bad} outside [0, {})",
                self.spec.num_classes
            )));
        }
        Ok(())
    }

    fn run(&self, w: &ModelWeights, x: &[f32], n: usize) -> Trace {
        let conv = |c: &Conv, input: &[f32]| {
            let mut out = vec![0.0f32; n * c.geom.out_len()];
            c.geom.forward(
                w.tensor(c.weight).data(),
                w.tensor(c.bias).data(),
                input,
                n,
                &mut out,
            );
            out
        };

        let mut stem_out = conv(&self.stem, x);
        relu(&mut stem_out);
        let mut acts = vec![stem_out];
        let mut hidden = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let input = acts.last().expect("stem output");
            let mut h = conv(&block.conv1, input);
            relu(&mut h);
            let mut out = conv(&block.conv2, &h);
            match &block.proj {
                Some(p) => add_into(&mut out, &conv(p, input)),
                None => add_into(&mut out, input),
            }
            relu(&mut out);
            hidden.push(h);
            acts.push(out);
        }

        let last = acts.last().expect("at least the stem");
        let pix = self.final_hw * self.final_hw;
        let features: Vec<f32> = last
            .chunks(pix)
            .map(|plane| plane.iter().sum::<f32>() / pix as f32)
            .collect();

        let classes = self.spec.num_classes;
        let bias = w.tensor(self.head_bias).data();
        let mut logits: Vec<f32> = (0..n).flat_map(|_| bias.iter().copied()).collect();
        gemm(
            Mat::new(&features, n, self.features),
            Mat::new(w.tensor(self.head_weight).data(), classes, self.features).t(),
            1.0,
            &mut logits,
        );
        Trace {
            acts,
            hidden,
            features,
            logits,
        }
    }

    /// Logits of shape `[N, num_classes]`.
    pub fn forward(&self, weights: &ModelWeights, batch: &Tensor) -> Result<Tensor, NnError> {
        self.check_weights(weights)?;
        let n = self.check_batch(batch)?;
        let trace = self.run(weights, batch.data(), n);
        Tensor::new(vec![n, self.spec.num_classes], trace.logits)
    }

    /// Mean cross-entropy of the batch, accumulated in `f64`.
    pub fn loss(
        &self,
        weights: &ModelWeights,
        batch: &Tensor,
        labels: &[usize],
    ) -> Result<f64, NnError> {
        self.check_weights(weights)?;
        let n = self.check_batch(batch)?;
        self.check_labels(labels, n)?;
        let trace = self.run(weights, batch.data(), n);
        let (losses, _) = softmax_xent(&trace.logits, labels, self.spec.num_classes);
        Ok(mean(&losses))
    }

    /// Mean cross-entropy and its gradient with respect to every tensor.
    pub fn loss_and_gradients(
        &self,
        weights: &ModelWeights,
        batch: &Tensor,
        labels: &[usize],
    ) -> Result<(f64, ModelWeights), NnError> {
        self.check_weights(weights)?;
        let n = self.check_batch(batch)?;
        self.check_labels(labels, n)?;
        let trace = self.run(weights, batch.data(), n);
        let classes = self.spec.num_classes;
        let (losses, probs) = softmax_xent(&trace.logits, labels, classes);
        if let Some(i) = losses.iter().position(|l| !l.is_finite()) {
            return Err(NnError::Divergence {
                batch_index: i,
                loss: losses[i],
            });
        }
        let loss = mean(&losses);

        let mut grads: Vec<Vec<f32>> = weights
            .entries()
            .iter()
            .map(|(_, t)| vec![0.0; t.len()])
            .collect();

        // d loss / d logits = (softmax - onehot) / N
        let mut dlogits = probs;
        for (i, &y) in labels.iter().enumerate() {
            dlogits[i * classes + y] -= 1.0;
        }
        let inv_n = 1.0 / n as f32;
        dlogits.iter_mut().for_each(|v| *v *= inv_n);

        gemm(
            Mat::new(&dlogits, n, classes).t(),
            Mat::new(&trace.features, n, self.features),
            0.0,
            &mut grads[self.head_weight],
        );
        for row in dlogits.chunks(classes) {
            for (g, d) in grads[self.head_bias].iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dfeat = vec![0.0f32; n * self.features];
        gemm(
            Mat::new(&dlogits, n, classes),
            Mat::new(weights.tensor(self.head_weight).data(), classes, self.features),
            0.0,
            &mut dfeat,
        );

        // global average pool
        let pix = self.final_hw * self.final_hw;
        let mut dact: Vec<f32> = dfeat
            .iter()
            .flat_map(|&d| std::iter::repeat_n(d / pix as f32, pix))
            .collect();

        for (bi, block) in self.blocks.iter().enumerate().rev() {
            let out = &trace.acts[bi + 1];
            let input = &trace.acts[bi];
            let h = &trace.hidden[bi];
            relu_backward(&mut dact, out);

            let mut dh = vec![0.0f32; h.len()];
            let (gw, gb) = pair_mut(&mut grads, block.conv2.weight, block.conv2.bias);
            block.conv2.geom.backward(
                weights.tensor(block.conv2.weight).data(),
                h,
                &dact,
                n,
                gw,
                gb,
                Some(&mut dh),
            );
            relu_backward(&mut dh, h);

            let mut dx = vec![0.0f32; input.len()];
            let (gw, gb) = pair_mut(&mut grads, block.conv1.weight, block.conv1.bias);
            block.conv1.geom.backward(
                weights.tensor(block.conv1.weight).data(),
                input,
                &dh,
                n,
                gw,
                gb,
                Some(&mut dx),
            );

            match &block.proj {
                Some(p) => {
                    let mut dskip = vec![0.0f32; input.len()];
                    let (gw, gb) = pair_mut(&mut grads, p.weight, p.bias);
                    p.geom.backward(
                        weights.tensor(p.weight).data(),
                        input,
                        &dact,
                        n,
                        gw,
                        gb,
                        Some(&mut dskip),
                    );
                    add_into(&mut dx, &dskip);
                }
                None => add_into(&mut dx, &dact),
            }
            dact = dx;
        }

        relu_backward(&mut dact, &trace.acts[0]);
        let (gw, gb) = pair_mut(&mut grads, self.stem.weight, self.stem.bias);
        self.stem.geom.backward(
            weights.tensor(self.stem.weight).data(),
            batch.data(),
            &dact,
            n,
            gw,
            gb,
            None,
        );

        let entries = weights
            .entries()
            .iter()
            .zip(grads)
            .map(|((name, t), g)| {
                Tensor::new(t.shape().to_vec(), g).map(|g| (name.clone(), g))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((loss, ModelWeights::new(entries)?))
    }

    /// One momentum-SGD step on the batch; returns the pre-step mean loss.
    ///
    /// On a non-finite loss or gradient the weights are left untouched.
    pub fn train_step(
        &self,
        weights: &mut ModelWeights,
        batch: &Tensor,
        labels: &[usize],
        opt: &mut OptimizerState,
    ) -> Result<f64, NnError> {
        if batch.shape().first() == Some(&0) || labels.is_empty() {
            return Err(NnError::Contract("empty batch".into()));
        }
        let (loss, grads) = self.loss_and_gradients(weights, batch, labels)?;
        if !grads.is_finite() {
            return Err(NnError::Divergence {
                batch_index: 0,
                loss,
            });
        }
        opt.apply(weights, &grads);
        Ok(loss)
    }

    /// Argmax predictions; ties go to the lowest class index.
    pub fn predict(&self, weights: &ModelWeights, batch: &Tensor) -> Result<Vec<usize>, NnError> {
        let logits = self.forward(weights, batch)?;
        Ok(logits
            .data()
            .chunks(self.spec.num_classes)
            .map(argmax)
            .collect())
    }

    /// Accuracy and mean loss over `(image, label)` pairs.
    pub fn evaluate(
        &self,
        weights: &ModelWeights,
        samples: &[(&Tensor, usize)],
    ) -> Result<Evaluation, NnError> {
        if samples.is_empty() {
            return Err(NnError::Contract("cannot evaluate an empty split".into()));
        }
        self.check_weights(weights)?;
        let mut correct = 0usize;
        let mut loss_sum = 0.0f64;
        for chunk in samples.chunks(EVAL_CHUNK) {
            let images: Vec<&Tensor> = chunk.iter().map(|(t, _)| *t).collect();
            let labels: Vec<usize> = chunk.iter().map(|(_, l)| *l).collect();
            let batch = Tensor::stack(&images)?;
            let n = self.check_batch(&batch)?;
            self.check_labels(&labels, n)?;
            let trace = self.run(weights, batch.data(), n);
            let classes = self.spec.num_classes;
            let (losses, _) = softmax_xent(&trace.logits, &labels, classes);
            loss_sum += losses.iter().sum::<f64>();
            correct += trace
                .logits
                .chunks(classes)
                .zip(&labels)
                .filter(|(row, &y)| argmax(row) == y)
                .count();
        }
        let total = samples.len();
        Ok(Evaluation {
            accuracy: correct as f64 / total as f64,
            mean_loss: loss_sum / total as f64,
            correct,
            total,
        })
    }
}

/// Builds the architecture and returns its seeded initial weights.
pub fn build_model(spec: &ArchitectureSpec, seed: u64) -> Result<ModelWeights, NnError> {
    Ok(ResidualNet::new(spec.clone())?.init(seed))
}

pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Row-wise softmax of `logits`, returning per-row losses and probabilities.
pub fn softmax_xent(logits: &[f32], labels: &[usize], classes: usize) -> (Vec<f64>, Vec<f32>) {
    let mut probs = vec![0.0f32; logits.len()];
    let mut losses = Vec::with_capacity(labels.len());
    for ((row, out), &y) in logits.chunks(classes).zip(probs.chunks_mut(classes)).zip(labels) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f32;
        for (p, v) in out.iter_mut().zip(row) {
            *p = (v - max).exp();
            sum += *p;
        }
        out.iter_mut().for_each(|p| *p /= sum);
        let loss = (sum.ln() + max - row[y]) as f64;
        losses.push(loss);
    }
    (losses, probs)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn relu(v: &mut [f32]) {
    // NaN must survive so divergence is detectable downstream
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Masks `grad` where the ReLU output was not positive.
fn relu_backward(grad: &mut [f32], out: &[f32]) {
    for (g, o) in grad.iter_mut().zip(out) {
        if *o <= 0.0 {
            *g = 0.0;
        }
    }
}

fn add_into(dst: &mut [f32], src: &[f32]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn pair_mut(v: &mut [Vec<f32>], a: usize, b: usize) -> (&mut [f32], &mut [f32]) {
    debug_assert!(a < b);
    let (lo, hi) = v.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}
