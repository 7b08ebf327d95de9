//! A small dense recognizer trained from scratch: flatten -> dense(ReLU)
//! stack -> dense(num_classes). Backpropagation reaches all the way to the
//! input measurements so mask gradients can flow through the capture model.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{parse_f64_payload, read_json_framed};

/// Layer sizes of the recognizer: `input_dim -> hidden... -> num_classes`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub num_classes: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, num_classes: usize) -> Result<Self> {
        if input_dim == 0 || hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidArgument("zero-width layer".to_string()));
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        Ok(Self {
            input_dim,
            hidden,
            num_classes,
        })
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.num_classes));
        dims
    }
}

/// One fully connected layer; weights are row-major `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.in_dim);
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let dot: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            out.push(dot + self.b[o]);
        }
    }
}

/// The recognizer parameters (symbol `R` in the training objective).
#[derive(Debug, Clone, PartialEq)]
pub struct Recognizer {
    arch: Architecture,
    pub layers: Vec<Dense>,
}

/// Per-layer parameter gradients, shaped like the layers themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Activations saved by [`Recognizer::forward_cached`] for the backward pass.
pub struct ForwardCache {
    /// Input batch to each layer (layer 0 gets the network input).
    layer_inputs: Vec<Vec<Vec<f64>>>,
    /// ReLU pass-through masks for each hidden layer.
    relu_masks: Vec<Vec<Vec<bool>>>,
}

impl Recognizer {
    /// Deterministic uniform init in `+/- sqrt(6 / (fan_in + fan_out))`.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = arch
            .layer_dims()
            .into_iter()
            .map(|(ind, outd)| {
                let bound = (6.0 / (ind + outd) as f64).sqrt();
                let w = (0..ind * outd)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                Dense {
                    in_dim: ind,
                    out_dim: outd,
                    w,
                    b: vec![0.0; outd],
                }
            })
            .collect();
        Self { arch, layers }
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn zero_grads(&self) -> ParamGrads {
        ParamGrads {
            layers: self
                .layers
                .iter()
                .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
                .collect(),
        }
    }

    fn check_inputs(&self, inputs: &[Vec<f64>]) -> Result<()> {
        if inputs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if let Some(bad) = inputs.iter().find(|x| x.len() != self.arch.input_dim) {
            return Err(Error::Dimension(format!(
                "input has {} features, expected {}",
                bad.len(),
                self.arch.input_dim
            )));
        }
        Ok(())
    }

    /// Batch logits, one row per sample.
    pub fn forward(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check_inputs(inputs)?;
        let mut out = Vec::with_capacity(inputs.len());
        let mut buf = Vec::new();
        for x in inputs {
            let mut act = x.clone();
            for (li, layer) in self.layers.iter().enumerate() {
                layer.apply(&act, &mut buf);
                if li + 1 < self.layers.len() {
                    for v in buf.iter_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                }
                std::mem::swap(&mut act, &mut buf);
            }
            out.push(act);
        }
        Ok(out)
    }

    /// Forward pass that also records the activations needed by [`Self::backward`].
    pub fn forward_cached(&self, inputs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, ForwardCache)> {
        self.check_inputs(inputs)?;
        let num_layers = self.layers.len();
        let mut layer_inputs: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(inputs.len()); num_layers];
        let mut relu_masks: Vec<Vec<Vec<bool>>> =
            vec![Vec::with_capacity(inputs.len()); num_layers.saturating_sub(1)];
        let mut logits = Vec::with_capacity(inputs.len());
        let mut buf = Vec::new();
        for x in inputs {
            let mut act = x.clone();
            for (li, layer) in self.layers.iter().enumerate() {
                layer_inputs[li].push(act.clone());
                layer.apply(&act, &mut buf);
                if li + 1 < num_layers {
                    let mask = buf.iter().map(|&v| v > 0.0).collect();
                    for v in buf.iter_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                    relu_masks[li].push(mask);
                }
                std::mem::swap(&mut act, &mut buf);
            }
            logits.push(act);
        }
        Ok((
            logits,
            ForwardCache {
                layer_inputs,
                relu_masks,
            },
        ))
    }

    /// Exact reverse-mode gradients for every parameter and for the inputs.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_logits: &[Vec<f64>],
    ) -> Result<(ParamGrads, Vec<Vec<f64>>)> {
        let batch = grad_logits.len();
        if cache.layer_inputs.first().map(|v| v.len()) != Some(batch) {
            return Err(Error::Dimension(
                "cache batch does not match gradient batch".to_string(),
            ));
        }
        let mut grads = self.zero_grads();
        let mut grad_act: Vec<Vec<f64>> = grad_logits.to_vec();

        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let (gw, gb) = &mut grads.layers[li];
            let mut grad_prev: Vec<Vec<f64>> = Vec::with_capacity(batch);
            for s in 0..batch {
                let gout = &grad_act[s];
                debug_assert_eq!(gout.len(), layer.out_dim);
                let input = &cache.layer_inputs[li][s];
                for o in 0..layer.out_dim {
                    let g = gout[o];
                    if g != 0.0 {
                        gb[o] += g;
                        let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                        for (wi, &xi) in row.iter_mut().zip(input) {
                            *wi += g * xi;
                        }
                    }
                }
                let mut gin = vec![0.0; layer.in_dim];
                for o in 0..layer.out_dim {
                    let g = gout[o];
                    if g != 0.0 {
                        let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                        for (gi, &wv) in gin.iter_mut().zip(row) {
                            *gi += g * wv;
                        }
                    }
                }
                if li > 0 {
                    // Gate through the ReLU that fed this layer.
                    for (gi, &open) in gin.iter_mut().zip(&cache.relu_masks[li - 1][s]) {
                        if !open {
                            *gi = 0.0;
                        }
                    }
                }
                grad_prev.push(gin);
            }
            grad_act = grad_prev;
        }
        Ok((grads, grad_act))
    }

    /// Writes `{"arch": ..., "epoch": ..., "seed": ...}\n` followed by each
    /// layer's weights then biases as little-endian `f64`.
    pub fn write_checkpoint(&self, path: &Path, epoch: usize, seed: u64) -> Result<()> {
        let header = serde_json::json!({
            "arch": self.arch,
            "epoch": epoch,
            "seed": seed,
        });
        let mut out = Vec::new();
        out.extend_from_slice(serde_json::to_string(&header)?.as_bytes());
        out.push(b'\n');
        for layer in &self.layers {
            for &v in layer.w.iter().chain(&layer.b) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn read_checkpoint(path: &Path) -> Result<(Self, CheckpointMeta)> {
        let (header, data) = read_json_framed(path)?;
        let arch: Architecture =
            serde_json::from_value(header["arch"].clone()).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                detail: format!("bad architecture: {e}"),
            })?;
        let meta = CheckpointMeta {
            epoch: header["epoch"].as_u64().unwrap_or(0) as usize,
            seed: header["seed"].as_u64().unwrap_or(0),
        };
        let total: usize = arch
            .layer_dims()
            .iter()
            .map(|(i, o)| i * o + o)
            .sum();
        let values = parse_f64_payload(path, &data, total)?;
        let mut layers = Vec::new();
        let mut offset = 0;
        for (ind, outd) in arch.layer_dims() {
            let w = values[offset..offset + ind * outd].to_vec();
            offset += ind * outd;
            let b = values[offset..offset + outd].to_vec();
            offset += outd;
            layers.push(Dense {
                in_dim: ind,
                out_dim: outd,
                w,
                b,
            });
        }
        Ok((Self { arch, layers }, meta))
    }
}

/// Epoch and seed recorded alongside checkpoint tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub seed: u64,
}

/// Mean softmax cross-entropy with max-subtraction stabilization.
/// Returns the loss and `d loss / d logits = (softmax - onehot) / batch`.
pub fn cross_entropy(logits: &[Vec<f64>], labels: &[usize]) -> Result<(f64, Vec<Vec<f64>>)> {
    if logits.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if logits.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} logit rows vs {} labels",
            logits.len(),
            labels.len()
        )));
    }
    let batch = logits.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (row, &label) in logits.iter().zip(labels) {
        if label >= row.len() {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {} classes",
                row.len()
            )));
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        loss += sum_exp.ln() + max - row[label];
        let mut g: Vec<f64> = row
            .iter()
            .map(|&v| (v - max).exp() / sum_exp / batch)
            .collect();
        g[label] -= 1.0 / batch;
        grads.push(g);
    }
    Ok((loss / batch, grads))
}

/// One SGD update with momentum and weight decay:
/// `v <- momentum * v + grad + weight_decay * param; param <- param - lr * v`.
pub fn sgd_step(
    param: &mut [f64],
    velocity: &mut [f64],
    grad: &[f64],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    debug_assert_eq!(param.len(), velocity.len());
    debug_assert_eq!(param.len(), grad.len());
    for ((p, v), &g) in param.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = momentum * *v + g + weight_decay * *p;
        *p -= lr * *v;
    }
}

/// Momentum SGD over all recognizer tensors.
pub struct Sgd {
    momentum: f64,
    weight_decay: f64,
    velocity: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Sgd {
    pub fn new(rec: &Recognizer, momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: rec
                .layers
                .iter()
                .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
                .collect(),
        }
    }

    pub fn step(&mut self, rec: &mut Recognizer, grads: &ParamGrads, lr: f64) {
        for ((layer, vel), grad) in rec
            .layers
            .iter_mut()
            .zip(self.velocity.iter_mut())
            .zip(&grads.layers)
        {
            sgd_step(&mut layer.w, &mut vel.0, &grad.0, lr, self.momentum, self.weight_decay);
            sgd_step(&mut layer.b, &mut vel.1, &grad.1, lr, self.momentum, self.weight_decay);
        }
    }
}

/// Per-sample min-max rescale to `[0, 1]`, applied to measurements before the
/// recognizer. A constant input maps to all zeros.
pub fn contrast_normalize(y: &[f64]) -> (Vec<f64>, ContrastCtx) {
    let mut argmin = 0;
    let mut argmax = 0;
    for (i, &v) in y.iter().enumerate() {
        if v < y[argmin] {
            argmin = i;
        }
        if v > y[argmax] {
            argmax = i;
        }
    }
    let range = y[argmax] - y[argmin];
    let z = if range > 0.0 {
        y.iter().map(|&v| (v - y[argmin]) / range).collect()
    } else {
        vec![0.0; y.len()]
    };
    (
        z,
        ContrastCtx {
            argmin,
            argmax,
            range,
        },
    )
}

/// Saved state for [`contrast_normalize_backward`].
#[derive(Debug, Clone, Copy)]
pub struct ContrastCtx {
    argmin: usize,
    argmax: usize,
    range: f64,
}

/// Derivative of the min-max rescale, treating the arg-extrema as fixed
/// (exact almost everywhere). Degenerate constant inputs get zero gradient.
pub fn contrast_normalize_backward(ctx: &ContrastCtx, z: &[f64], grad_z: &[f64]) -> Vec<f64> {
    debug_assert_eq!(z.len(), grad_z.len());
    if ctx.range <= 0.0 {
        return vec![0.0; z.len()];
    }
    let sum_g: f64 = grad_z.iter().sum();
    let sum_gz: f64 = grad_z.iter().zip(z).map(|(g, zz)| g * zz).sum();
    let mut grad_y: Vec<f64> = grad_z.iter().map(|g| g / ctx.range).collect();
    grad_y[ctx.argmin] += (-sum_g + sum_gz) / ctx.range;
    grad_y[ctx.argmax] -= sum_gz / ctx.range;
    grad_y
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_net(seed: u64) -> Recognizer {
        let arch = Architecture::new(6, vec![5], 3).unwrap();
        Recognizer::init(arch, seed)
    }

    fn random_batch(rows: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..rows)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let mut net = small_net(0);
        for layer in net.layers.iter_mut() {
            layer.w.iter_mut().for_each(|v| *v = 0.0);
            layer.b.iter_mut().for_each(|v| *v = 0.0);
        }
        let logits = net.forward(&random_batch(4, 6, 1)).unwrap();
        for row in logits {
            assert!(row.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_linear_layer_matches_closed_form() {
        let arch = Architecture::new(2, vec![], 2).unwrap();
        let mut net = Recognizer::init(arch, 0);
        net.layers[0].w = vec![1.0, 2.0, 3.0, 4.0];
        net.layers[0].b = vec![0.5, -0.5];
        let x = vec![vec![1.0, -1.0]];
        let logits = net.forward(&x).unwrap();
        assert_eq!(logits[0], vec![1.0 - 2.0 + 0.5, 3.0 - 4.0 - 0.5]);

        // grad_input = grad_logits . W for a linear layer.
        let (_, cache) = net.forward_cached(&x).unwrap();
        let (_, grad_in) = net.backward(&cache, &[vec![1.0, 1.0]]).unwrap();
        assert_eq!(grad_in[0], vec![1.0 + 3.0, 2.0 + 4.0]);
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln_k() {
        for k in [2usize, 3, 10] {
            let logits = vec![vec![0.7; k]];
            let (loss, _) = cross_entropy(&logits, &[0]).unwrap();
            assert!((loss - (k as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_saturates_to_zero() {
        let logits = vec![vec![0.0, 0.0, 40.0]];
        let (loss, _) = cross_entropy(&logits, &[2]).unwrap();
        assert!(loss < 1e-15, "loss {loss}");
    }

    #[test]
    fn cross_entropy_closed_form_example() {
        let logits = vec![vec![1.0, 2.0, 3.0]];
        let (loss, _) = cross_entropy(&logits, &[2]).unwrap();
        let expected = (1f64.exp() + 2f64.exp() + 3f64.exp()).ln() - 3.0;
        assert!((loss - expected).abs() < 1e-12);
        assert!((loss - 0.40760596444438).abs() < 1e-10);
    }

    #[test]
    fn cross_entropy_rejects_bad_labels() {
        let logits = vec![vec![0.0, 1.0]];
        assert!(cross_entropy(&logits, &[2]).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = random_batch(5, 7, 3);
        let labels = vec![0usize; 5];
        let (_, grads) = cross_entropy(&logits, &labels).unwrap();
        // grad = (softmax - onehot) / B, so softmax = grad * B + onehot.
        for (row, &label) in grads.iter().zip(&labels) {
            let sum: f64 = row
                .iter()
                .enumerate()
                .map(|(i, &g)| g * 5.0 + if i == label { 1.0 } else { 0.0 })
                .sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_is_shift_invariant() {
        let logits = random_batch(4, 6, 9);
        let labels = [1usize, 3, 0, 5];
        let (a, _) = cross_entropy(&logits, &labels).unwrap();
        let shifted: Vec<Vec<f64>> = logits
            .iter()
            .map(|row| row.iter().map(|v| v + 123.456).collect())
            .collect();
        let (b, _) = cross_entropy(&shifted, &labels).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn zero_logit_gradient_gives_zero_grads() {
        let net = small_net(4);
        let batch = random_batch(3, 6, 5);
        let (_, cache) = net.forward_cached(&batch).unwrap();
        let grad_logits = vec![vec![0.0; 3]; 3];
        let (grads, grad_in) = net.backward(&cache, &grad_logits).unwrap();
        for (gw, gb) in &grads.layers {
            assert!(gw.iter().all(|&v| v == 0.0));
            assert!(gb.iter().all(|&v| v == 0.0));
        }
        assert!(grad_in.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let net = small_net(11);
        let batch = random_batch(4, 6, 12);
        let labels = [0usize, 1, 2, 1];

        let loss_of = |net: &Recognizer| {
            let logits = net.forward(&batch).unwrap();
            cross_entropy(&logits, &labels).unwrap().0
        };

        let (logits, cache) = net.forward_cached(&batch).unwrap();
        let (_, grad_logits) = cross_entropy(&logits, &labels).unwrap();
        let (grads, _) = net.backward(&cache, &grad_logits).unwrap();

        let step = 1e-6;
        for li in 0..net.layers.len() {
            for wi in 0..net.layers[li].w.len() {
                let mut plus = net.clone();
                plus.layers[li].w[wi] += step;
                let mut minus = net.clone();
                minus.layers[li].w[wi] -= step;
                let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * step);
                let a = grads.layers[li].0[wi];
                assert!(
                    (a - fd).abs() / (a.abs() + fd.abs()).max(1.0) < 1e-6,
                    "layer {li} w[{wi}]: {a} vs {fd}"
                );
            }
            for bi in 0..net.layers[li].b.len() {
                let mut plus = net.clone();
                plus.layers[li].b[bi] += step;
                let mut minus = net.clone();
                minus.layers[li].b[bi] -= step;
                let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * step);
                let a = grads.layers[li].1[bi];
                assert!(
                    (a - fd).abs() / (a.abs() + fd.abs()).max(1.0) < 1e-6,
                    "layer {li} b[{bi}]: {a} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn input_gradients_match_finite_differences() {
        let net = small_net(13);
        let batch = random_batch(2, 6, 14);
        let labels = [2usize, 0];

        let (logits, cache) = net.forward_cached(&batch).unwrap();
        let (_, grad_logits) = cross_entropy(&logits, &labels).unwrap();
        let (_, grad_in) = net.backward(&cache, &grad_logits).unwrap();

        let step = 1e-6;
        for s in 0..batch.len() {
            for i in 0..6 {
                let mut plus = batch.clone();
                plus[s][i] += step;
                let mut minus = batch.clone();
                minus[s][i] -= step;
                let lp = cross_entropy(&net.forward(&plus).unwrap(), &labels).unwrap().0;
                let lm = cross_entropy(&net.forward(&minus).unwrap(), &labels).unwrap().0;
                let fd = (lp - lm) / (2.0 * step);
                let a = grad_in[s][i];
                assert!(
                    (a - fd).abs() / (a.abs() + fd.abs()).max(1.0) < 1e-6,
                    "sample {s} input {i}: {a} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn sgd_step_basic_rules() {
        // Plain gradient step.
        let mut p = vec![1.0];
        let mut v = vec![0.0];
        sgd_step(&mut p, &mut v, &[0.25], 1.0, 0.0, 0.0);
        assert_eq!(p, vec![0.75]);

        // Momentum keeps moving with zero gradient.
        let mut p = vec![1.0];
        let mut v = vec![0.5];
        sgd_step(&mut p, &mut v, &[0.0], 0.1, 0.9, 0.0);
        assert!((p[0] - (1.0 - 0.1 * 0.45)).abs() < 1e-15);
    }

    #[test]
    fn sgd_two_steps_match_scalar_oracle() {
        // Minimize f(x) = 0.5 * x^2, grad = x, from x0 = 1.
        let (lr, momentum, wd) = (0.3, 0.9, 0.01);
        let mut x = 1.0f64;
        let mut v = 0.0f64;
        for _ in 0..2 {
            v = momentum * v + x + wd * x;
            x -= lr * v;
        }
        let mut p = vec![1.0];
        let mut vel = vec![0.0];
        for _ in 0..2 {
            let g = vec![p[0]];
            sgd_step(&mut p, &mut vel, &g, lr, momentum, wd);
        }
        assert!((p[0] - x).abs() < 1e-15);
    }

    #[test]
    fn contrast_normalize_maps_to_unit_interval() {
        let y = vec![2.0, -1.0, 0.5, 3.0];
        let (z, _) = contrast_normalize(&y);
        assert_eq!(z[1], 0.0);
        assert_eq!(z[3], 1.0);
        assert!(z.iter().all(|&v| (0.0..=1.0).contains(&v)));

        let (z, ctx) = contrast_normalize(&[0.7; 5]);
        assert!(z.iter().all(|&v| v == 0.0));
        let g = contrast_normalize_backward(&ctx, &z, &[1.0; 5]);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn contrast_normalize_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let y: Vec<f64> = (0..9).map(|_| rng.random_range(-2.0..2.0)).collect();
        let gz: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();

        let (z, ctx) = contrast_normalize(&y);
        let grad = contrast_normalize_backward(&ctx, &z, &gz);

        let f = |y: &[f64]| -> f64 {
            let (z, _) = contrast_normalize(y);
            z.iter().zip(&gz).map(|(a, b)| a * b).sum()
        };
        let step = 1e-7;
        for i in 0..y.len() {
            let mut plus = y.clone();
            plus[i] += step;
            let mut minus = y.clone();
            minus[i] -= step;
            let fd = (f(&plus) - f(&minus)) / (2.0 * step);
            assert!(
                (grad[i] - fd).abs() < 1e-6,
                "index {i}: {} vs {fd}",
                grad[i]
            );
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        let net = small_net(77);
        net.write_checkpoint(&path, 42, 7).unwrap();
        let (back, meta) = Recognizer::read_checkpoint(&path).unwrap();
        assert_eq!(net, back);
        assert_eq!(meta.epoch, 42);
        assert_eq!(meta.seed, 7);
    }

    #[test]
    fn forward_is_deterministic() {
        let net = small_net(3);
        let batch = random_batch(3, 6, 8);
        let a = net.forward(&batch).unwrap();
        let b = net.forward(&batch).unwrap();
        assert_eq!(a, b);
    }
}
