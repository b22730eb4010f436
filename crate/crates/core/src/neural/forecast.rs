use alloc::vec::Vec;

use super::arch::ArchKind;
use super::model::ModelParams;
use super::train::gather_batch;
use crate::dataset::{split_windows, SplitSpec, SplitWindows, WindowedDataset};
use crate::error::{invalid, Error, Result};
use crate::field::{apply_minmax, fit_minmax, ScalingParams, SnapshotMatrix};
use crate::metrics::{rrmse, ErrorSeries};

/// Number of future snapshots each forecaster emits.
pub const HORIZON: usize = 2;

/// Past snapshots consumed per prediction.
pub const DEFAULT_Q: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastData {
    pub windows: SplitWindows,
    /// Min-max map fitted on the training block (CNN only).
    pub scaling: Option<ScalingParams>,
}

/// Splits `field` and builds rolling windows per block. The CNN path scales
/// every block with a min-max map fitted on the training block alone.
pub fn prepare_forecast_data(
    field: &SnapshotMatrix,
    split: SplitSpec,
    q: usize,
    kind: ArchKind,
) -> Result<ForecastData> {
    match kind {
        ArchKind::Rnn => Ok(ForecastData { windows: split_windows(field, split, q, HORIZON)?, scaling: None }),
        ArchKind::Cnn => {
            if split.k_training == 0 || split.total() != field.k() {
                return Err(invalid!("split must cover K = {} with a non-empty training block", field.k()));
            }
            let scaling = fit_minmax(&field.slice_columns(0, split.k_training)?)?;
            let scaled = apply_minmax(field, scaling)?;
            Ok(ForecastData { windows: split_windows(&scaled, split, q, HORIZON)?, scaling: Some(scaling) })
        }
    }
}

/// Predicts the two snapshots following `window` (its last `q` columns are
/// used). `window` lives in the domain the model was prepared from; the CNN
/// path scales it in and the output back out, then `baseline` (two
/// snapshots) is added when given.
pub fn predict_two_ahead(
    params: &ModelParams,
    window: &SnapshotMatrix,
    scaling: Option<ScalingParams>,
    baseline: Option<&[f64]>,
) -> Result<SnapshotMatrix> {
    let arch = params.arch();
    match (arch.kind, scaling) {
        (ArchKind::Cnn, None) => return Err(Error::Config("CNN prediction needs the training scaling".into())),
        (ArchKind::Rnn, Some(_)) => return Err(Error::Config("the RNN consumes unscaled data".into())),
        _ => {}
    }
    if window.grid() != arch.grid || window.k() < arch.q {
        return Err(invalid!("window needs {} snapshots on a {:?} grid", arch.q, arch.grid));
    }
    let j = arch.grid.len();
    let mut x: Vec<f64> = window.data()[(window.k() - arch.q) * j..].to_vec();
    if let Some(s) = scaling {
        s.apply_slice(&mut x);
    }
    let mut y = params.predict(&x, 1)?;
    if let Some(s) = scaling {
        s.invert_slice(&mut y);
    }
    if let Some(b) = baseline {
        if b.len() != y.len() {
            return Err(invalid!("baseline has {} values, prediction {}", b.len(), y.len()));
        }
        y.iter_mut().zip(b).for_each(|(v, b)| *v += b);
    }
    SnapshotMatrix::new(arch.grid, HORIZON, window.dt(), y)
}

/// Prediction and truth of one window, both as `horizon * J` values.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowForecast {
    pub prediction: Vec<f64>,
    pub truth: Vec<f64>,
}

fn unscale(mut v: Vec<f64>, scaling: Option<ScalingParams>) -> Vec<f64> {
    if let Some(s) = scaling {
        s.invert_slice(&mut v);
    }
    v
}

/// Network forecasts for every window of `data`, mapped back through
/// `scaling` when the windows are scaled.
pub fn window_forecasts(
    params: &ModelParams,
    data: &WindowedDataset,
    scaling: Option<ScalingParams>,
) -> Result<Vec<WindowForecast>> {
    let arch = params.arch();
    if data.q != arch.q || data.horizon != arch.horizon || data.source.grid() != arch.grid {
        return Err(invalid!("windows do not match the architecture's q, horizon or grid"));
    }
    let out_len = arch.output_len();
    let all: Vec<usize> = (0..data.len()).collect();
    let mut result = Vec::with_capacity(data.len());
    for chunk in all.chunks(16) {
        let (x, y) = gather_batch(data, chunk);
        let pred = params.predict(&x, chunk.len())?;
        for (p, t) in pred.chunks(out_len).zip(y.chunks(out_len)) {
            result
                .push(WindowForecast { prediction: unscale(p.to_vec(), scaling), truth: unscale(t.to_vec(), scaling) });
        }
    }
    Ok(result)
}

/// Persistence forecasts: every horizon repeats the last input snapshot.
pub fn persistence_forecasts(data: &WindowedDataset, scaling: Option<ScalingParams>) -> Vec<WindowForecast> {
    (0..data.len())
        .map(|w| {
            let last = data.source.column(data.input_indices(w).end - 1);
            let prediction = (0..data.horizon).flat_map(|_| last.iter().copied()).collect();
            WindowForecast { prediction: unscale(prediction, scaling), truth: unscale(data.target_flat(w), scaling) }
        })
        .collect()
}

/// Per-window relative error over the concatenated horizon snapshots.
pub fn forecast_errors(forecasts: &[WindowForecast]) -> Result<ErrorSeries> {
    let values = forecasts.iter().map(|f| rrmse(&f.prediction, &f.truth)).collect::<Result<Vec<_>>>()?;
    ErrorSeries::new(values)
}
