use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::field::Grid2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn code(self) -> u32 {
        match self {
            Activation::Linear => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
            Activation::Tanh => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            0 => Activation::Linear,
            1 => Activation::Relu,
            2 => Activation::Sigmoid,
            3 => Activation::Tanh,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArchKind {
    Rnn,
    Cnn,
}

impl ArchKind {
    pub fn name(self) -> &'static str {
        match self {
            ArchKind::Rnn => "rnn",
            ArchKind::Cnn => "cnn",
        }
    }
}

/// One layer of a forecaster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    /// LSTM with tanh activation and sigmoid recurrent activation; emits the
    /// final hidden state only.
    Lstm {
        units: usize,
    },
    Dense {
        units: usize,
        activation: Activation,
    },
    /// Stride 1, no padding. Input and output are channels-last `D x H x W x C`.
    Conv3d {
        kernel: [usize; 3],
        filters: usize,
        activation: Activation,
    },
    /// Non-overlapping max pooling, stride equal to the pool size, floor sizing.
    MaxPool3d {
        pool: [usize; 3],
    },
    /// Per-channel normalization over the batch and all positions.
    BatchNorm {
        momentum: f64,
        epsilon: f64,
    },
    Flatten,
}

pub const BATCHNORM_MOMENTUM: f64 = 0.99;
pub const BATCHNORM_EPSILON: f64 = 1e-3;

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Lstm { .. } => "LSTM",
            LayerSpec::Dense { .. } => "FC",
            LayerSpec::Conv3d { .. } => "Conv3D",
            LayerSpec::MaxPool3d { .. } => "MaxPool3D",
            LayerSpec::BatchNorm { .. } => "BatchNorm",
            LayerSpec::Flatten => "Flatten",
        }
    }

    /// Output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Lstm { units } => match input {
                [t, _] if *t > 0 && units > 0 => Ok(vec![units]),
                _ => Err(invalid!("LSTM expects a [steps, features] input, got {input:?}")),
            },
            LayerSpec::Dense { units, .. } => match input {
                [n] if *n > 0 && units > 0 => Ok(vec![units]),
                _ => Err(invalid!("FC expects a flat input, got {input:?}")),
            },
            LayerSpec::Conv3d { kernel, filters, .. } => match input {
                [d, h, w, _] => {
                    if kernel.iter().zip([d, h, w]).any(|(k, n)| *k == 0 || k > n) || filters == 0 {
                        return Err(invalid!("Conv3D kernel {kernel:?} does not fit input {input:?}"));
                    }
                    Ok(vec![d - kernel[0] + 1, h - kernel[1] + 1, w - kernel[2] + 1, filters])
                }
                _ => Err(invalid!("Conv3D expects a [D, H, W, C] input, got {input:?}")),
            },
            LayerSpec::MaxPool3d { pool } => match input {
                [d, h, w, c] => {
                    if pool.iter().zip([d, h, w]).any(|(p, n)| *p == 0 || p > n) {
                        return Err(invalid!("MaxPool3D pool {pool:?} does not fit input {input:?}"));
                    }
                    Ok(vec![d / pool[0], h / pool[1], w / pool[2], *c])
                }
                _ => Err(invalid!("MaxPool3D expects a [D, H, W, C] input, got {input:?}")),
            },
            LayerSpec::BatchNorm { momentum, epsilon } => {
                if input.is_empty() || !(0.0..1.0).contains(&momentum) || !(epsilon > 0.0) {
                    return Err(invalid!("invalid BatchNorm settings or input {input:?}"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    /// Trainable scalar count given the per-sample input shape.
    pub fn trainable(&self, input: &[usize]) -> usize {
        match *self {
            LayerSpec::Lstm { units } => 4 * (input[1] + units + 1) * units,
            LayerSpec::Dense { units, .. } => input[0] * units + units,
            LayerSpec::Conv3d { kernel, filters, .. } => {
                kernel.iter().product::<usize>() * input[3] * filters + filters
            }
            LayerSpec::BatchNorm { .. } => 2 * input[input.len() - 1],
            LayerSpec::MaxPool3d { .. } | LayerSpec::Flatten => 0,
        }
    }

    /// Non-trainable state (BatchNorm running mean and variance).
    pub fn buffers(&self, input: &[usize]) -> usize {
        match self {
            LayerSpec::BatchNorm { .. } => 2 * input[input.len() - 1],
            _ => 0,
        }
    }
}

/// Architecture of a forecaster mapping `q` snapshots to `horizon` snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub kind: ArchKind,
    pub q: usize,
    pub grid: Grid2D,
    pub horizon: usize,
    pub layers: Vec<LayerSpec>,
}

impl ArchSpec {
    /// LSTM(400) -> FC(200, ReLU) -> FC(80, ReLU) -> FC(horizon * J, Linear).
    pub fn rnn(q: usize, grid: Grid2D, horizon: usize) -> Result<Self> {
        Self::new(
            ArchKind::Rnn,
            q,
            grid,
            horizon,
            vec![
                LayerSpec::Lstm { units: 400 },
                LayerSpec::Dense { units: 200, activation: Activation::Relu },
                LayerSpec::Dense { units: 80, activation: Activation::Relu },
                LayerSpec::Dense { units: horizon * grid.len(), activation: Activation::Linear },
            ],
        )
    }

    /// Three Conv3D(2x2x2, ReLU) -> MaxPool3D(1x2x2) -> BatchNorm blocks with
    /// 5, 10 and 20 filters, a 1x1x1 Conv3D with 2 filters, Flatten,
    /// FC(80, ReLU) and FC(horizon * J, Sigmoid).
    pub fn cnn(q: usize, grid: Grid2D, horizon: usize) -> Result<Self> {
        let mut layers = Vec::new();
        for filters in [5, 10, 20] {
            layers.push(LayerSpec::Conv3d { kernel: [2, 2, 2], filters, activation: Activation::Relu });
            layers.push(LayerSpec::MaxPool3d { pool: [1, 2, 2] });
            layers.push(LayerSpec::BatchNorm { momentum: BATCHNORM_MOMENTUM, epsilon: BATCHNORM_EPSILON });
        }
        layers.push(LayerSpec::Conv3d { kernel: [1, 1, 1], filters: 2, activation: Activation::Relu });
        layers.push(LayerSpec::Flatten);
        layers.push(LayerSpec::Dense { units: 80, activation: Activation::Relu });
        layers.push(LayerSpec::Dense { units: horizon * grid.len(), activation: Activation::Sigmoid });
        Self::new(ArchKind::Cnn, q, grid, horizon, layers)
    }

    /// Arbitrary layer chain; shape-checked end to end.
    pub fn new(kind: ArchKind, q: usize, grid: Grid2D, horizon: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        if q == 0 || horizon == 0 || grid.nx == 0 || grid.ny == 0 {
            return Err(invalid!("q, horizon and grid must be positive"));
        }
        let spec = Self { kind, q, grid, horizon, layers };
        spec.shapes()?;
        Ok(spec)
    }

    /// Per-sample input shape: `[q, J]` for the RNN, `[q, ny, nx, 1]` for the CNN.
    pub fn input_shape(&self) -> Vec<usize> {
        match self.kind {
            ArchKind::Rnn => vec![self.q, self.grid.len()],
            ArchKind::Cnn => vec![self.q, self.grid.ny, self.grid.nx, 1],
        }
    }

    pub fn input_len(&self) -> usize {
        self.q * self.grid.len()
    }

    pub fn output_len(&self) -> usize {
        self.horizon * self.grid.len()
    }

    /// Shapes after the input and after every layer.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape()];
        for layer in &self.layers {
            let next = layer.output_shape(shapes.last().expect("non-empty"))?;
            shapes.push(next);
        }
        let last = shapes.last().expect("non-empty");
        if last.as_slice() != [self.output_len()] {
            return Err(invalid!("network emits {last:?}, expected [{}]", self.output_len()));
        }
        Ok(shapes)
    }

    /// Total trainable scalars.
    pub fn param_count(&self) -> usize {
        let shapes = self.shapes().expect("validated on construction");
        self.layers.iter().zip(&shapes).map(|(l, s)| l.trainable(s)).sum()
    }

    pub fn buffer_count(&self) -> usize {
        let shapes = self.shapes().expect("validated on construction");
        self.layers.iter().zip(&shapes).map(|(l, s)| l.buffers(s)).sum()
    }
}

/// Trainable scalar count of an architecture.
pub fn param_count(arch: &ArchSpec) -> usize {
    arch.param_count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid2D {
        Grid2D::new(n, n).unwrap()
    }

    #[test]
    fn cnn_shape_trace_at_100() {
        let arch = ArchSpec::cnn(10, grid(100), 2).unwrap();
        let shapes = arch.shapes().unwrap();
        let expected: [&[usize]; 13] = [
            &[10, 100, 100, 1],
            &[9, 99, 99, 5],
            &[9, 49, 49, 5],
            &[9, 49, 49, 5],
            &[8, 48, 48, 10],
            &[8, 24, 24, 10],
            &[8, 24, 24, 10],
            &[7, 23, 23, 20],
            &[7, 11, 11, 20],
            &[7, 11, 11, 20],
            &[7, 11, 11, 2],
            &[1694],
            &[80],
        ];
        for (got, want) in shapes.iter().zip(expected) {
            assert_eq!(got.as_slice(), want);
        }
        assert_eq!(shapes.last().unwrap().as_slice(), &[20_000]);
    }

    #[test]
    fn per_layer_counts() {
        assert_eq!(LayerSpec::Dense { units: 200, activation: Activation::Relu }.trainable(&[400]), 80_200);
        let conv = LayerSpec::Conv3d { kernel: [2, 2, 2], filters: 5, activation: Activation::Relu };
        assert_eq!(conv.trainable(&[10, 100, 100, 1]), 45);
        let arch = ArchSpec::cnn(10, grid(100), 2).unwrap();
        let shapes = arch.shapes().unwrap();
        let counts: Vec<usize> = arch.layers.iter().zip(&shapes).map(|(l, s)| l.trainable(s)).collect();
        assert_eq!(counts, [45, 0, 10, 410, 0, 20, 1620, 0, 40, 42, 0, 135_600, 1_620_000]);
        assert_eq!(arch.buffer_count(), 70);
    }

    #[test]
    fn full_model_totals() {
        let rnn = ArchSpec::rnn(10, grid(100), 2).unwrap();
        let cnn = ArchSpec::cnn(10, grid(100), 2).unwrap();
        assert_eq!(param_count(&rnn), 18_357_880);
        assert_eq!(param_count(&cnn), 1_757_787);
        assert!(param_count(&rnn) > 4 * param_count(&cnn));
    }

    #[test]
    fn small_grid_cnn_still_fits() {
        let shapes = ArchSpec::cnn(10, grid(20), 2).unwrap().shapes().unwrap();
        assert_eq!(shapes[11].as_slice(), &[14]);
        assert!(ArchSpec::cnn(2, grid(20), 2).is_err());
    }

    #[test]
    fn mismatched_head_rejected() {
        let layers = vec![LayerSpec::Flatten, LayerSpec::Dense { units: 3, activation: Activation::Linear }];
        assert!(ArchSpec::new(ArchKind::Rnn, 2, grid(2), 2, layers).is_err());
        assert!(ArchSpec::rnn(0, grid(2), 2).is_err());
    }
}
