//! NeuralFMUs: model instances embedded between trainable dense chains.

mod cs;
mod data;
pub mod experiment;
mod extract;
mod me;
mod train;

pub use cs::CsNeuralFmu;
pub use data::{mse_loss, Dataset};
pub use extract::{extract_bottom_response, extract_top_response};
pub use me::MeNeuralFmu;
pub use train::{train, train_with, Adam, Optimizer, OptimizerState, TrainConfig, TrainReport};
