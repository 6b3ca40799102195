//! Independent references shared by the core suites and the acceptance run.

use fedkit::nn::{ArchitectureSpec, ModelWeights, ResidualNet, StageSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straight-loop `f64` forward pass of the residual classifier, reading the
/// weight set by tensor name. Shares no code with the library kernels.
pub mod reference {
    use fedkit::nn::{ArchitectureSpec, ModelWeights};

    pub struct Planes {
        pub c: usize,
        pub hw: usize,
        pub v: Vec<f64>,
    }

    fn at(p: &Planes, c: usize, y: isize, x: isize) -> f64 {
        if y < 0 || x < 0 || y >= p.hw as isize || x >= p.hw as isize {
            0.0
        } else {
            p.v[(c * p.hw + y as usize) * p.hw + x as usize]
        }
    }

    fn conv(w: &[f64], wshape: &[usize], b: &[f64], stride: usize, input: &Planes) -> Planes {
        let (oc, ic, k) = (wshape[0], wshape[1], wshape[2]);
        assert_eq!(ic, input.c);
        let pad = (k / 2) as isize;
        let ohw = (input.hw + 2 * (k / 2) - k) / stride + 1;
        let mut v = vec![0.0; oc * ohw * ohw];
        for o in 0..oc {
            for oy in 0..ohw {
                for ox in 0..ohw {
                    let mut acc = b[o];
                    for c in 0..ic {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad;
                                let ix = (ox * stride + kx) as isize - pad;
                                acc += w[((o * ic + c) * k + ky) * k + kx] * at(input, c, iy, ix);
                            }
                        }
                    }
                    v[(o * ohw + oy) * ohw + ox] = acc;
                }
            }
        }
        Planes { c: oc, hw: ohw, v }
    }

    /// ReLU that also records which units were active, so callers can
    /// detect finite-difference steps that cross a kink.
    fn relu(p: &mut Planes, pattern: &mut Vec<bool>) {
        for x in p.v.iter_mut() {
            pattern.push(*x > 0.0);
            *x = x.max(0.0);
        }
    }

    pub fn params(w: &ModelWeights) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        w.entries()
            .iter()
            .map(|(n, t)| {
                (
                    n.clone(),
                    t.shape().to_vec(),
                    t.data().iter().map(|&v| v as f64).collect(),
                )
            })
            .collect()
    }

    fn get<'a>(p: &'a [(String, Vec<usize>, Vec<f64>)], name: &str) -> (&'a [usize], &'a [f64]) {
        let e = p.iter().find(|(n, _, _)| n == name).unwrap();
        (&e.1, &e.2)
    }

    pub fn logits(
        spec: &ArchitectureSpec,
        p: &[(String, Vec<usize>, Vec<f64>)],
        image: &[f64],
        pattern: &mut Vec<bool>,
    ) -> Vec<f64> {
        let input = Planes {
            c: spec.channels,
            hw: spec.input_size,
            v: image.to_vec(),
        };
        let (ws, w) = get(p, "stem.weight");
        let (_, b) = get(p, "stem.bias");
        let mut x = conv(w, ws, b, spec.stem_stride, &input);
        relu(&mut x, pattern);
        for (s, stage) in spec.stages.iter().enumerate() {
            for blk in 0..stage.blocks {
                let stride = if s > 0 && blk == 0 { 2 } else { 1 };
                let pre = format!("stage{s}.block{blk}");
                let (ws, w) = get(p, &format!("{pre}.conv1.weight"));
                let (_, b) = get(p, &format!("{pre}.conv1.bias"));
                let mut h = conv(w, ws, b, stride, &x);
                relu(&mut h, pattern);
                let (ws, w) = get(p, &format!("{pre}.conv2.weight"));
                let (_, b) = get(p, &format!("{pre}.conv2.bias"));
                let mut out = conv(w, ws, b, 1, &h);
                let skip = if p.iter().any(|(n, _, _)| *n == format!("{pre}.proj.weight")) {
                    let (ws, w) = get(p, &format!("{pre}.proj.weight"));
                    let (_, b) = get(p, &format!("{pre}.proj.bias"));
                    conv(w, ws, b, stride, &x)
                } else {
                    Planes { c: x.c, hw: x.hw, v: x.v.clone() }
                };
                for (o, s) in out.v.iter_mut().zip(&skip.v) {
                    *o += s;
                }
                relu(&mut out, pattern);
                x = out;
            }
        }
        let pix = (x.hw * x.hw) as f64;
        let feats: Vec<f64> = x.v.chunks(x.hw * x.hw).map(|c| c.iter().sum::<f64>() / pix).collect();
        let (hs, hw) = get(p, "head.weight");
        let (_, hb) = get(p, "head.bias");
        (0..hs[0])
            .map(|k| hb[k] + (0..hs[1]).map(|j| hw[k * hs[1] + j] * feats[j]).sum::<f64>())
            .collect()
    }

    pub fn mean_loss(
        spec: &ArchitectureSpec,
        p: &[(String, Vec<usize>, Vec<f64>)],
        images: &[Vec<f64>],
        labels: &[usize],
        pattern: &mut Vec<bool>,
    ) -> f64 {
        let mut total = 0.0;
        for (img, &y) in images.iter().zip(labels) {
            let z = logits(spec, p, img, pattern);
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            total += lse - z[y];
        }
        total / images.len() as f64
    }
}

pub fn random_batch(rng: &mut ChaCha8Rng, n: usize, spec: &ArchitectureSpec) -> Tensor {
    let len = n * spec.channels * spec.input_size * spec.input_size;
    let data = (0..len).map(|_| rng.random::<f32>()).collect();
    Tensor::new(vec![n, spec.channels, spec.input_size, spec.input_size], data).unwrap()
}

/// Perturbs every value so biases and the head are non-trivial.
pub fn jitter(w: &mut ModelWeights, rng: &mut ChaCha8Rng, scale: f32) {
    for t in w.tensors_mut() {
        for v in t.data_mut() {
            *v += (rng.random::<f32>() - 0.5) * scale;
        }
    }
}

pub fn grad_check_spec() -> ArchitectureSpec {
    ArchitectureSpec {
        input_size: 4,
        channels: 1,
        num_classes: 2,
        stem_stride: 1,
        stages: vec![StageSpec { blocks: 1, width: 3 }, StageSpec { blocks: 1, width: 4 }],
    }
}

/// Max relative error between analytic gradients and central differences
/// (step 1e-3) of the independent `f64` reference loss, plus the number of
/// parameters skipped because a step flipped some ReLU (no derivative there).
pub fn gradient_check_error(seed: u64) -> (f64, usize, usize) {
    let spec = grad_check_spec();
    let net = ResidualNet::new(spec.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = net.init(seed);
    jitter(&mut w, &mut rng, 0.4);
    let x = random_batch(&mut rng, 3, &spec);
    let labels = [0usize, 1, 1];
    let (_, grads) = net.loss_and_gradients(&w, &x, &labels).unwrap();

    let images: Vec<Vec<f64>> = (0..3)
        .map(|i| x.row(i).iter().map(|&v| v as f64).collect())
        .collect();
    let mut params = reference::params(&w);
    let mut base = Vec::new();
    reference::mean_loss(&spec, &params, &images, &labels, &mut base);
    let eps = 1e-3;
    let mut worst = 0.0f64;
    let (mut checked, mut skipped) = (0, 0);
    for ti in 0..params.len() {
        for j in 0..params[ti].2.len() {
            let orig = params[ti].2[j];
            let (mut pu, mut pd) = (Vec::new(), Vec::new());
            params[ti].2[j] = orig + eps;
            let up = reference::mean_loss(&spec, &params, &images, &labels, &mut pu);
            params[ti].2[j] = orig - eps;
            let down = reference::mean_loss(&spec, &params, &images, &labels, &mut pd);
            params[ti].2[j] = orig;
            if pu != base || pd != base {
                skipped += 1;
                continue;
            }
            checked += 1;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.tensor(ti).data()[j] as f64;
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4);
            worst = worst.max(err);
        }
    }
    (worst, checked, skipped)
}
