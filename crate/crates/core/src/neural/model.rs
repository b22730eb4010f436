use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::{ArchSpec, LayerSpec};
use super::layers::{self, Cache, Mode};
use crate::error::{invalid, Error, Result};
use crate::fmath;

/// Where one layer's tensors live inside the flat parameter and buffer vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlot {
    pub offset: usize,
    pub len: usize,
    pub buffer_offset: usize,
    pub buffer_len: usize,
}

/// Per-layer placement of every tensor, in declaration order.
pub fn layout(arch: &ArchSpec) -> Vec<LayerSlot> {
    let shapes = arch.shapes().expect("validated on construction");
    let (mut off, mut boff) = (0, 0);
    arch.layers
        .iter()
        .zip(&shapes)
        .map(|(layer, shape)| {
            let slot = LayerSlot {
                offset: off,
                len: layer.trainable(shape),
                buffer_offset: boff,
                buffer_len: layer.buffers(shape),
            };
            off += slot.len;
            boff += slot.buffer_len;
            slot
        })
        .collect()
}

/// Tensor shapes of one layer in storage order. Dense weights are
/// `[out, in]`, LSTM weights `[4H, F]`, `[4H, H]`, `[4H]` with gate order
/// `i, f, g, o`, Conv3D weights `[Cout, kd, kh, kw, Cin]`, BatchNorm `gamma`
/// then `beta`.
pub fn tensor_shapes(layer: &LayerSpec, input: &[usize]) -> Vec<Vec<usize>> {
    match *layer {
        LayerSpec::Dense { units, .. } => vec![vec![units, input[0]], vec![units]],
        LayerSpec::Lstm { units } => {
            vec![vec![4 * units, input[1]], vec![4 * units, units], vec![4 * units]]
        }
        LayerSpec::Conv3d { kernel, filters, .. } => {
            vec![vec![filters, kernel[0], kernel[1], kernel[2], input[3]], vec![filters]]
        }
        LayerSpec::BatchNorm { .. } => {
            let c = input[input.len() - 1];
            vec![vec![c], vec![c]]
        }
        LayerSpec::MaxPool3d { .. } | LayerSpec::Flatten => Vec::new(),
    }
}

/// Trainable weights and BatchNorm running statistics of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    arch: ArchSpec,
    weights: Vec<f64>,
    /// Running mean then running variance per BatchNorm layer.
    buffers: Vec<f64>,
}

/// Activations and caches of one forward pass.
pub struct ForwardPass {
    pub output: Vec<f64>,
    caches: Vec<Cache>,
    buffers: Option<Vec<f64>>,
}

impl ForwardPass {
    /// BatchNorm running statistics after this pass (training mode only).
    pub fn updated_buffers(&self) -> Option<&[f64]> {
        self.buffers.as_deref()
    }
}

impl ModelParams {
    /// Glorot-uniform weights from `seed`, zero biases except the LSTM forget
    /// gate (one), BatchNorm `gamma = 1`, `beta = 0`, running mean 0 and
    /// variance 1.
    pub fn init(arch: &ArchSpec, seed: u64) -> Self {
        let shapes = arch.shapes().expect("validated on construction");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(arch.param_count());
        let mut buffers = Vec::with_capacity(arch.buffer_count());
        let mut glorot = |out: &mut Vec<f64>, count: usize, fan_in: usize, fan_out: usize| {
            let limit = fmath::sqrt(6.0 / (fan_in + fan_out) as f64);
            out.extend((0..count).map(|_| rng.random_range(-limit..limit)));
        };
        for (layer, shape) in arch.layers.iter().zip(&shapes) {
            match *layer {
                LayerSpec::Dense { units, .. } => {
                    glorot(&mut weights, units * shape[0], shape[0], units);
                    weights.extend(core::iter::repeat_n(0.0, units));
                }
                LayerSpec::Lstm { units: h } => {
                    let f = shape[1];
                    glorot(&mut weights, 4 * h * f, f, 4 * h);
                    glorot(&mut weights, 4 * h * h, h, 4 * h);
                    for gate in 0..4 {
                        let v = if gate == 1 { 1.0 } else { 0.0 };
                        weights.extend(core::iter::repeat_n(v, h));
                    }
                }
                LayerSpec::Conv3d { kernel, filters, .. } => {
                    let field: usize = kernel.iter().product();
                    let cin = shape[3];
                    glorot(&mut weights, filters * field * cin, field * cin, field * filters);
                    weights.extend(core::iter::repeat_n(0.0, filters));
                }
                LayerSpec::BatchNorm { .. } => {
                    let c = shape[shape.len() - 1];
                    weights.extend(core::iter::repeat_n(1.0, c));
                    weights.extend(core::iter::repeat_n(0.0, c));
                    buffers.extend(core::iter::repeat_n(0.0, c));
                    buffers.extend(core::iter::repeat_n(1.0, c));
                }
                LayerSpec::MaxPool3d { .. } | LayerSpec::Flatten => {}
            }
        }
        debug_assert_eq!(weights.len(), arch.param_count());
        Self { arch: arch.clone(), weights, buffers }
    }

    /// All-zero weights and biases; BatchNorm state as in [`ModelParams::init`].
    pub fn zeros(arch: &ArchSpec) -> Self {
        let mut p = Self::init(arch, 0);
        p.weights.iter_mut().for_each(|w| *w = 0.0);
        p
    }

    pub fn from_parts(arch: ArchSpec, weights: Vec<f64>, buffers: Vec<f64>) -> Result<Self> {
        if weights.len() != arch.param_count() || buffers.len() != arch.buffer_count() {
            return Err(invalid!(
                "expected {} weights and {} buffers, got {} and {}",
                arch.param_count(),
                arch.buffer_count(),
                weights.len(),
                buffers.len()
            ));
        }
        if weights.iter().chain(&buffers).any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite model parameter".into()));
        }
        Ok(Self { arch, weights, buffers })
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn buffers(&self) -> &[f64] {
        &self.buffers
    }

    pub fn set_buffers(&mut self, buffers: &[f64]) {
        self.buffers.copy_from_slice(buffers);
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len()
    }

    /// Forward pass over `n` samples laid out back to back in `x`.
    pub fn forward(&self, x: &[f64], n: usize, mode: Mode) -> Result<ForwardPass> {
        let in_len = self.arch.input_len();
        if n == 0 || x.len() != n * in_len {
            return Err(invalid!("expected {n} samples of {in_len} values, got {} values", x.len()));
        }
        let shapes = self.arch.shapes()?;
        let slots = layout(&self.arch);
        let mut caches = Vec::with_capacity(self.arch.layers.len());
        let mut new_buffers = (mode == Mode::Train && !self.buffers.is_empty()).then(|| self.buffers.clone());
        let mut act = x.to_vec();
        for (l, layer) in self.arch.layers.iter().enumerate() {
            let slot = slots[l];
            let out = layers::forward(
                layer,
                &shapes[l],
                &shapes[l + 1],
                &self.weights[slot.offset..slot.offset + slot.len],
                &self.buffers[slot.buffer_offset..slot.buffer_offset + slot.buffer_len],
                &act,
                n,
                mode,
            );
            if out.output.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericOverflow(alloc::format!(
                    "non-finite activation after layer {} ({})",
                    l + 1,
                    layer.name()
                )));
            }
            if let (Some(updated), Some(buf)) = (out.buffers, new_buffers.as_mut()) {
                buf[slot.buffer_offset..slot.buffer_offset + slot.buffer_len].copy_from_slice(&updated);
            }
            caches.push(out.cache);
            act = out.output;
        }
        Ok(ForwardPass { output: act, caches, buffers: new_buffers })
    }

    /// Inference-mode output for `n` samples.
    pub fn predict(&self, x: &[f64], n: usize) -> Result<Vec<f64>> {
        Ok(self.forward(x, n, Mode::Infer)?.output)
    }

    /// Gradient of the loss with respect to every trainable scalar, given the
    /// derivative of the loss with respect to the network output.
    pub fn backward(&self, pass: &ForwardPass, d_output: &[f64], n: usize) -> Vec<f64> {
        let shapes = self.arch.shapes().expect("validated on construction");
        let slots = layout(&self.arch);
        let mut grads = vec![0.0; self.weights.len()];
        let mut delta = d_output.to_vec();
        for l in (0..self.arch.layers.len()).rev() {
            let slot = slots[l];
            let need_dx = l > 0;
            let dx = layers::backward(
                &self.arch.layers[l],
                &shapes[l],
                &shapes[l + 1],
                &self.weights[slot.offset..slot.offset + slot.len],
                &pass.caches[l],
                &delta,
                n,
                &mut grads[slot.offset..slot.offset + slot.len],
                need_dx,
            );
            match dx {
                Some(dx) if need_dx => delta = dx,
                _ => break,
            }
        }
        grads
    }

    /// Training-mode loss and gradient for one batch.
    pub fn loss_and_grad(&self, x: &[f64], y: &[f64], n: usize) -> Result<(f64, Vec<f64>, ForwardPass)> {
        let pass = self.forward(x, n, Mode::Train)?;
        let (loss, d_out) = batch_loss(&pass.output, y, n, self.arch.horizon)?;
        let grads = self.backward(&pass, &d_out, n);
        Ok((loss, grads, pass))
    }

    /// Inference-mode loss over `n` samples.
    pub fn eval_loss(&self, x: &[f64], y: &[f64], n: usize) -> Result<f64> {
        let out = self.predict(x, n)?;
        Ok(batch_loss(&out, y, n, self.arch.horizon)?.0)
    }
}

/// Batch MSE loss `sum_b ||y_hat_b - y_b||^2 / (horizon * n)` and its
/// derivative with respect to `y_hat`.
pub fn batch_loss(pred: &[f64], target: &[f64], n: usize, horizon: usize) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() || n == 0 || horizon == 0 {
        return Err(invalid!("prediction has {} values, target {}", pred.len(), target.len()));
    }
    let scale = 1.0 / (horizon * n) as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let r = p - t;
            loss += r * r;
            2.0 * scale * r
        })
        .collect();
    Ok((loss * scale, grad))
}
