//! Recurrent and convolutional two-step forecasters with hand-written
//! backpropagation, Adam and early stopping.

pub mod adam;
pub mod arch;
pub mod forecast;
pub mod layers;
pub mod model;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use arch::{param_count, Activation, ArchKind, ArchSpec, LayerSpec};
pub use forecast::{
    forecast_errors, persistence_forecasts, predict_two_ahead, prepare_forecast_data, window_forecasts, ForecastData,
    WindowForecast, DEFAULT_Q, HORIZON,
};
pub use layers::Mode;
pub use model::{batch_loss, layout, tensor_shapes, ForwardPass, LayerSlot, ModelParams};
pub use train::{
    dataset_loss, gather_batch, train, train_from, Clock, EarlyStopping, EpochLoss, NoClock, StopReason, TrainConfig,
    TrainReport,
};
