use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::arch::{ArchKind, ArchSpec};
use super::model::ModelParams;
use crate::dataset::WindowedDataset;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub early_stopping: bool,
}

impl TrainConfig {
    /// Batch 5, patience 10, default Adam; 70 epochs for the CNN and 140 for
    /// the RNN.
    pub fn for_kind(kind: ArchKind, seed: u64) -> Self {
        Self {
            batch_size: 5,
            epochs: match kind {
                ArchKind::Cnn => 70,
                ArchKind::Rnn => 140,
            },
            patience: 10,
            adam: AdamConfig::default(),
            seed,
            early_stopping: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || self.patience == 0 {
            return Err(invalid!("batch_size, epochs and patience must be positive"));
        }
        self.adam.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::MaxEpochs => "max-epochs",
            StopReason::EarlyStop => "early-stop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochLoss>,
    pub stopping_epoch: usize,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
    pub wall_time_s: f64,
}

/// Source of elapsed time; the core has no clock of its own.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// Reports zero elapsed time.
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

/// Patience rule: stop once `patience` consecutive epochs bring no strict
/// improvement of the validation loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, best_epoch: 0, stale: 0 }
    }

    /// Records an epoch's validation loss; returns whether it is the new best.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

/// Inputs and targets of the windows `idx`, stacked sample-major.
pub fn gather_batch(data: &WindowedDataset, idx: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for &w in idx {
        data.inputs(w).for_each(|c| x.extend_from_slice(c));
        data.target_indices(w).for_each(|k| y.extend_from_slice(data.source.column(k)));
    }
    (x, y)
}

/// Inference-mode loss averaged over every window of `data`.
pub fn dataset_loss(params: &ModelParams, data: &WindowedDataset, batch_size: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(invalid!("empty window set"));
    }
    let all: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for chunk in all.chunks(batch_size.max(1)) {
        let (x, y) = gather_batch(data, chunk);
        total += params.eval_loss(&x, &y, chunk.len())? * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

fn check_compatible(arch: &ArchSpec, data: &WindowedDataset, what: &str) -> Result<()> {
    if data.is_empty() {
        return Err(invalid!("{what} window set is empty"));
    }
    if data.q != arch.q || data.horizon != arch.horizon || data.source.grid() != arch.grid {
        return Err(invalid!("{what} windows do not match the architecture's q, horizon or grid"));
    }
    Ok(())
}

/// Trains freshly initialized weights (seeded by `cfg.seed`).
pub fn train(
    arch: &ArchSpec,
    train_set: &WindowedDataset,
    validation: &WindowedDataset,
    cfg: &TrainConfig,
    clock: &dyn Clock,
) -> Result<(ModelParams, TrainReport)> {
    train_from(ModelParams::init(arch, cfg.seed), train_set, validation, cfg, clock)
}

/// Mini-batch Adam from `params`. Returns the parameters of the epoch with
/// the lowest validation loss.
pub fn train_from(
    mut params: ModelParams,
    train_set: &WindowedDataset,
    validation: &WindowedDataset,
    cfg: &TrainConfig,
    clock: &dyn Clock,
) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    check_compatible(params.arch(), train_set, "training")?;
    check_compatible(params.arch(), validation, "validation")?;
    let start = clock.seconds();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut state = AdamState::zeros(params.parameter_count());
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = params.clone();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step = 0u64;
    let mut stop_reason = StopReason::MaxEpochs;
    let diverged = |epoch| {
        move |e: Error| match e {
            Error::NumericOverflow(_) => Error::TrainingDiverged { epoch },
            other => other,
        }
    };

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (x, y) = gather_batch(train_set, batch);
            let (loss, grads, pass) = params.loss_and_grad(&x, &y, batch.len()).map_err(diverged(epoch))?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDiverged { epoch });
            }
            loss_sum += loss * batch.len() as f64;
            step += 1;
            adam_step(params.weights_mut(), &grads, &mut state, step, &cfg.adam)?;
            if let Some(buf) = pass.updated_buffers() {
                params.set_buffers(buf);
            }
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let val_loss = dataset_loss(&params, validation, cfg.batch_size).map_err(diverged(epoch))?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        history.push(EpochLoss { epoch, train_loss, val_loss });
        if stopper.observe(epoch, val_loss) {
            best = params.clone();
        }
        if cfg.early_stopping && stopper.should_stop() {
            stop_reason = StopReason::EarlyStop;
            break;
        }
    }

    let report = TrainReport {
        stopping_epoch: history.len(),
        best_epoch: stopper.best_epoch(),
        stop_reason,
        history,
        wall_time_s: clock.seconds() - start,
    };
    Ok((best, report))
}
