//! Forward and backward kernels for every layer type, operating on batches
//! stored sample-major in flat buffers.

use alloc::vec;
use alloc::vec::Vec;

use super::arch::{Activation, LayerSpec};
use crate::fmath;

/// Whether BatchNorm uses batch statistics or running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn activate(a: Activation, z: f64) -> f64 {
    match a {
        Activation::Linear => z,
        Activation::Relu => z.max(0.0),
        Activation::Sigmoid => fmath::sigmoid(z),
        Activation::Tanh => fmath::tanh(z),
    }
}

/// Derivative of the activation expressed through its output.
#[inline]
fn activate_grad(a: Activation, y: f64) -> f64 {
    match a {
        Activation::Linear => 1.0,
        Activation::Relu => {
            if y > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Sigmoid => y * (1.0 - y),
        Activation::Tanh => 1.0 - y * y,
    }
}

/// Per-layer state kept from the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub enum Cache {
    Dense { input: Vec<f64>, output: Vec<f64> },
    Lstm { input: Vec<f64>, steps: Vec<LstmStep> },
    Conv { input: Vec<f64>, output: Vec<f64> },
    Pool { argmax: Vec<usize>, in_len: usize },
    BatchNorm { xhat: Vec<f64>, inv_std: Vec<f64>, train: bool },
    Flatten,
}

#[derive(Debug, Clone)]
pub struct LstmStep {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates `i, f, g, o`, `n x 4H`.
    gates: Vec<f64>,
    c: Vec<f64>,
}

/// Result of one layer's forward pass.
pub struct LayerOut {
    pub output: Vec<f64>,
    pub cache: Cache,
    /// Updated BatchNorm running statistics (training mode only).
    pub buffers: Option<Vec<f64>>,
}

/// Runs `layer` on a batch of `n` samples.
#[allow(clippy::too_many_arguments)]
pub fn forward(
    layer: &LayerSpec,
    in_shape: &[usize],
    out_shape: &[usize],
    weights: &[f64],
    buffers: &[f64],
    x: &[f64],
    n: usize,
    mode: Mode,
) -> LayerOut {
    let plain = |output, cache| LayerOut { output, cache, buffers: None };
    match *layer {
        LayerSpec::Dense { units, activation } => {
            let fan_in = in_shape[0];
            let (w, b) = weights.split_at(units * fan_in);
            let mut y = vec![0.0; n * units];
            for r in 0..units {
                let row = &w[r * fan_in..(r + 1) * fan_in];
                for s in 0..n {
                    let z = b[r] + dot(row, &x[s * fan_in..(s + 1) * fan_in]);
                    y[s * units + r] = activate(activation, z);
                }
            }
            plain(y.clone(), Cache::Dense { input: x.to_vec(), output: y })
        }
        LayerSpec::Lstm { units: h } => {
            let (steps_n, feat) = (in_shape[0], in_shape[1]);
            let g4 = 4 * h;
            let (wx, rest) = weights.split_at(g4 * feat);
            let (wh, bias) = rest.split_at(g4 * h);
            let mut hs = vec![0.0; n * h];
            let mut cs = vec![0.0; n * h];
            let mut steps = Vec::with_capacity(steps_n);
            let mut z = vec![0.0; n * g4];
            for t in 0..steps_n {
                for r in 0..g4 {
                    let wx_r = &wx[r * feat..(r + 1) * feat];
                    let wh_r = &wh[r * h..(r + 1) * h];
                    for s in 0..n {
                        let xt = &x[(s * steps_n + t) * feat..(s * steps_n + t + 1) * feat];
                        z[s * g4 + r] = bias[r] + dot(wx_r, xt) + dot(wh_r, &hs[s * h..(s + 1) * h]);
                    }
                }
                let mut gates = vec![0.0; n * g4];
                let mut c_new = vec![0.0; n * h];
                let mut h_new = vec![0.0; n * h];
                for s in 0..n {
                    let zs = &z[s * g4..(s + 1) * g4];
                    let gs = &mut gates[s * g4..(s + 1) * g4];
                    for u in 0..h {
                        let i = fmath::sigmoid(zs[u]);
                        let f = fmath::sigmoid(zs[h + u]);
                        let g = fmath::tanh(zs[2 * h + u]);
                        let o = fmath::sigmoid(zs[3 * h + u]);
                        gs[u] = i;
                        gs[h + u] = f;
                        gs[2 * h + u] = g;
                        gs[3 * h + u] = o;
                        let c = f * cs[s * h + u] + i * g;
                        c_new[s * h + u] = c;
                        h_new[s * h + u] = o * fmath::tanh(c);
                    }
                }
                let h_prev = core::mem::replace(&mut hs, h_new);
                let c_prev = core::mem::replace(&mut cs, c_new);
                steps.push(LstmStep { h_prev, c_prev, gates, c: cs.clone() });
            }
            plain(hs, Cache::Lstm { input: x.to_vec(), steps })
        }
        LayerSpec::Conv3d { kernel, filters, activation } => {
            let (ind, inh, inw, cin) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
            let (od, oh, ow) = (out_shape[0], out_shape[1], out_shape[2]);
            let patch_len = kernel[0] * kernel[1] * kernel[2] * cin;
            let (w, b) = weights.split_at(filters * patch_len);
            let in_len = ind * inh * inw * cin;
            let out_len = od * oh * ow * filters;
            let mut y = vec![0.0; n * out_len];
            let mut patch = vec![0.0; patch_len];
            for s in 0..n {
                let xs = &x[s * in_len..(s + 1) * in_len];
                for d in 0..od {
                    for r in 0..oh {
                        for c in 0..ow {
                            gather_patch(xs, [inh, inw, cin], kernel, [d, r, c], &mut patch);
                            let base = s * out_len + ((d * oh + r) * ow + c) * filters;
                            for f in 0..filters {
                                let z = b[f] + dot(&w[f * patch_len..(f + 1) * patch_len], &patch);
                                y[base + f] = activate(activation, z);
                            }
                        }
                    }
                }
            }
            plain(y.clone(), Cache::Conv { input: x.to_vec(), output: y })
        }
        LayerSpec::MaxPool3d { pool } => {
            let (inh, inw, ch) = (in_shape[1], in_shape[2], in_shape[3]);
            let (od, oh, ow) = (out_shape[0], out_shape[1], out_shape[2]);
            let in_len: usize = in_shape.iter().product();
            let out_len: usize = out_shape.iter().product();
            let mut y = vec![0.0; n * out_len];
            let mut argmax = vec![0usize; n * out_len];
            for s in 0..n {
                for d in 0..od {
                    for r in 0..oh {
                        for c in 0..ow {
                            for k in 0..ch {
                                let mut best = f64::NEG_INFINITY;
                                let mut best_idx = 0;
                                for a in 0..pool[0] {
                                    for b in 0..pool[1] {
                                        for e in 0..pool[2] {
                                            let idx = s * in_len
                                                + (((d * pool[0] + a) * inh + r * pool[1] + b) * inw + c * pool[2] + e)
                                                    * ch
                                                + k;
                                            if x[idx] > best {
                                                best = x[idx];
                                                best_idx = idx;
                                            }
                                        }
                                    }
                                }
                                let o = s * out_len + ((d * oh + r) * ow + c) * ch + k;
                                y[o] = best;
                                argmax[o] = best_idx;
                            }
                        }
                    }
                }
            }
            plain(y, Cache::Pool { argmax, in_len })
        }
        LayerSpec::BatchNorm { momentum, epsilon } => {
            let ch = in_shape[in_shape.len() - 1];
            let (gamma, beta) = weights.split_at(ch);
            let (run_mean, run_var) = buffers.split_at(ch);
            let count = x.len() / ch;
            let (mean, var) = match mode {
                Mode::Train => {
                    let mut mean = vec![0.0; ch];
                    for (i, &v) in x.iter().enumerate() {
                        mean[i % ch] += v;
                    }
                    mean.iter_mut().for_each(|m| *m /= count as f64);
                    let mut var = vec![0.0; ch];
                    for (i, &v) in x.iter().enumerate() {
                        let dv = v - mean[i % ch];
                        var[i % ch] += dv * dv;
                    }
                    var.iter_mut().for_each(|v| *v /= count as f64);
                    (mean, var)
                }
                Mode::Infer => (run_mean.to_vec(), run_var.to_vec()),
            };
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / fmath::sqrt(v + epsilon)).collect();
            let mut xhat = vec![0.0; x.len()];
            let mut y = vec![0.0; x.len()];
            for (i, &v) in x.iter().enumerate() {
                let c = i % ch;
                xhat[i] = (v - mean[c]) * inv_std[c];
                y[i] = gamma[c] * xhat[i] + beta[c];
            }
            let updated = (mode == Mode::Train).then(|| {
                let mut buf = Vec::with_capacity(2 * ch);
                buf.extend((0..ch).map(|c| momentum * run_mean[c] + (1.0 - momentum) * mean[c]));
                buf.extend((0..ch).map(|c| momentum * run_var[c] + (1.0 - momentum) * var[c]));
                buf
            });
            LayerOut {
                output: y,
                cache: Cache::BatchNorm { xhat, inv_std, train: mode == Mode::Train },
                buffers: updated,
            }
        }
        LayerSpec::Flatten => plain(x.to_vec(), Cache::Flatten),
    }
}

fn gather_patch(xs: &[f64], dims: [usize; 3], kernel: [usize; 3], at: [usize; 3], patch: &mut [f64]) {
    let [inh, inw, cin] = dims;
    let mut p = 0;
    for a in 0..kernel[0] {
        for b in 0..kernel[1] {
            let row = ((at[0] + a) * inh + at[1] + b) * inw;
            for c in 0..kernel[2] {
                let src = (row + at[2] + c) * cin;
                patch[p..p + cin].copy_from_slice(&xs[src..src + cin]);
                p += cin;
            }
        }
    }
}

fn scatter_patch(dxs: &mut [f64], dims: [usize; 3], kernel: [usize; 3], at: [usize; 3], patch: &[f64]) {
    let [inh, inw, cin] = dims;
    let mut p = 0;
    for a in 0..kernel[0] {
        for b in 0..kernel[1] {
            let row = ((at[0] + a) * inh + at[1] + b) * inw;
            for c in 0..kernel[2] {
                let dst = (row + at[2] + c) * cin;
                for k in 0..cin {
                    dxs[dst + k] += patch[p + k];
                }
                p += cin;
            }
        }
    }
}

/// Back-propagates `dy` through `layer`, accumulating parameter gradients
/// into `grads` and returning the input gradient when `need_dx` is set.
#[allow(clippy::too_many_arguments)]
pub fn backward(
    layer: &LayerSpec,
    in_shape: &[usize],
    out_shape: &[usize],
    weights: &[f64],
    cache: &Cache,
    dy: &[f64],
    n: usize,
    grads: &mut [f64],
    need_dx: bool,
) -> Option<Vec<f64>> {
    match (*layer, cache) {
        (LayerSpec::Dense { units, activation }, Cache::Dense { input, output }) => {
            let fan_in = in_shape[0];
            let (w, _) = weights.split_at(units * fan_in);
            let (gw, gb) = grads.split_at_mut(units * fan_in);
            let dz: Vec<f64> = dy.iter().zip(output).map(|(d, y)| d * activate_grad(activation, *y)).collect();
            let mut dx = if need_dx { vec![0.0; n * fan_in] } else { Vec::new() };
            for r in 0..units {
                let row = &w[r * fan_in..(r + 1) * fan_in];
                let grow = &mut gw[r * fan_in..(r + 1) * fan_in];
                for s in 0..n {
                    let d = dz[s * units + r];
                    if d == 0.0 {
                        continue;
                    }
                    axpy(grow, d, &input[s * fan_in..(s + 1) * fan_in]);
                    gb[r] += d;
                    if need_dx {
                        axpy(&mut dx[s * fan_in..(s + 1) * fan_in], d, row);
                    }
                }
            }
            need_dx.then_some(dx)
        }
        (LayerSpec::Lstm { units: h }, Cache::Lstm { input, steps }) => {
            let (steps_n, feat) = (in_shape[0], in_shape[1]);
            let g4 = 4 * h;
            let (wx, rest) = weights.split_at(g4 * feat);
            let (wh, _) = rest.split_at(g4 * h);
            let (gwx, grest) = grads.split_at_mut(g4 * feat);
            let (gwh, gb) = grest.split_at_mut(g4 * h);
            let mut dh = dy.to_vec();
            let mut dc = vec![0.0; n * h];
            let mut dz = vec![0.0; n * g4];
            let mut dx = if need_dx { vec![0.0; n * steps_n * feat] } else { Vec::new() };
            for t in (0..steps_n).rev() {
                let step = &steps[t];
                for s in 0..n {
                    for u in 0..h {
                        let gs = &step.gates[s * g4..(s + 1) * g4];
                        let (i, f, g, o) = (gs[u], gs[h + u], gs[2 * h + u], gs[3 * h + u]);
                        let k = s * h + u;
                        let tc = fmath::tanh(step.c[k]);
                        let dh_k = dh[k];
                        let dc_tot = dc[k] + dh_k * o * (1.0 - tc * tc);
                        let zs = &mut dz[s * g4..(s + 1) * g4];
                        zs[u] = dc_tot * g * i * (1.0 - i);
                        zs[h + u] = dc_tot * step.c_prev[k] * f * (1.0 - f);
                        zs[2 * h + u] = dc_tot * i * (1.0 - g * g);
                        zs[3 * h + u] = dh_k * tc * o * (1.0 - o);
                        dc[k] = dc_tot * f;
                    }
                }
                let mut dh_prev = vec![0.0; n * h];
                for r in 0..g4 {
                    let wx_r = &wx[r * feat..(r + 1) * feat];
                    let wh_r = &wh[r * h..(r + 1) * h];
                    for s in 0..n {
                        let d = dz[s * g4 + r];
                        if d == 0.0 {
                            continue;
                        }
                        let xt_off = (s * steps_n + t) * feat;
                        axpy(&mut gwx[r * feat..(r + 1) * feat], d, &input[xt_off..xt_off + feat]);
                        axpy(&mut gwh[r * h..(r + 1) * h], d, &step.h_prev[s * h..(s + 1) * h]);
                        gb[r] += d;
                        axpy(&mut dh_prev[s * h..(s + 1) * h], d, wh_r);
                        if need_dx {
                            axpy(&mut dx[xt_off..xt_off + feat], d, wx_r);
                        }
                    }
                }
                dh = dh_prev;
            }
            need_dx.then_some(dx)
        }
        (LayerSpec::Conv3d { kernel, filters, activation }, Cache::Conv { input, output }) => {
            let (ind, inh, inw, cin) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
            let (od, oh, ow) = (out_shape[0], out_shape[1], out_shape[2]);
            let patch_len = kernel[0] * kernel[1] * kernel[2] * cin;
            let (w, _) = weights.split_at(filters * patch_len);
            let (gw, gb) = grads.split_at_mut(filters * patch_len);
            let in_len = ind * inh * inw * cin;
            let out_len = od * oh * ow * filters;
            let mut dx = if need_dx { vec![0.0; n * in_len] } else { Vec::new() };
            let mut patch = vec![0.0; patch_len];
            let mut dpatch = vec![0.0; patch_len];
            for s in 0..n {
                let xs = &input[s * in_len..(s + 1) * in_len];
                for d in 0..od {
                    for r in 0..oh {
                        for c in 0..ow {
                            let base = s * out_len + ((d * oh + r) * ow + c) * filters;
                            let mut any = false;
                            dpatch.iter_mut().for_each(|v| *v = 0.0);
                            gather_patch(xs, [inh, inw, cin], kernel, [d, r, c], &mut patch);
                            for f in 0..filters {
                                let dz = dy[base + f] * activate_grad(activation, output[base + f]);
                                if dz == 0.0 {
                                    continue;
                                }
                                any = true;
                                axpy(&mut gw[f * patch_len..(f + 1) * patch_len], dz, &patch);
                                gb[f] += dz;
                                if need_dx {
                                    axpy(&mut dpatch, dz, &w[f * patch_len..(f + 1) * patch_len]);
                                }
                            }
                            if need_dx && any {
                                let dxs = &mut dx[s * in_len..(s + 1) * in_len];
                                scatter_patch(dxs, [inh, inw, cin], kernel, [d, r, c], &dpatch);
                            }
                        }
                    }
                }
            }
            need_dx.then_some(dx)
        }
        (LayerSpec::MaxPool3d { .. }, Cache::Pool { argmax, in_len }) => {
            let mut dx = vec![0.0; n * in_len];
            for (o, &src) in argmax.iter().enumerate() {
                dx[src] += dy[o];
            }
            Some(dx)
        }
        (LayerSpec::BatchNorm { .. }, Cache::BatchNorm { xhat, inv_std, train }) => {
            let ch = in_shape[in_shape.len() - 1];
            let gamma = &weights[..ch];
            let (ggamma, gbeta) = grads.split_at_mut(ch);
            let mut sum_dy = vec![0.0; ch];
            let mut sum_dy_xhat = vec![0.0; ch];
            for (i, &d) in dy.iter().enumerate() {
                sum_dy[i % ch] += d;
                sum_dy_xhat[i % ch] += d * xhat[i];
            }
            for c in 0..ch {
                ggamma[c] += sum_dy_xhat[c];
                gbeta[c] += sum_dy[c];
            }
            // Batch statistics depend on the input; with running statistics the
            // normalization is an affine map.
            let count = (dy.len() / ch) as f64;
            let dx = dy
                .iter()
                .enumerate()
                .map(|(i, &d)| {
                    let c = i % ch;
                    if *train {
                        gamma[c] * inv_std[c] / count * (count * d - sum_dy[c] - xhat[i] * sum_dy_xhat[c])
                    } else {
                        gamma[c] * inv_std[c] * d
                    }
                })
                .collect();
            Some(dx)
        }
        (LayerSpec::Flatten, Cache::Flatten) => Some(dy.to_vec()),
        _ => unreachable!("cache does not match layer"),
    }
}
