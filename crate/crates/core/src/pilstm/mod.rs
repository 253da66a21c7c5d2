//! Physics-informed LSTM predictor: one model per coupling variable.

pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
pub mod network;
pub mod online;
pub mod optim;
pub mod scaler;
pub mod train;

pub use checkpoint::{load, save, Checkpoint};
pub use network::{ModelParams, NetworkTopology};
pub use online::PilstmPredictor;
pub use scaler::{MinMax, Scaler};
pub use train::{train, train_with_progress, EpochRecord, PilstmModel, SetMetrics, TrainConfig, TrainLog};
