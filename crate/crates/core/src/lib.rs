//! Differentiable model-exchange / co-simulation runtime and NeuralFMUs.

pub mod error;
pub mod io;
pub mod model;
pub mod models;
pub mod net;
pub mod nfmu;
pub mod ode;
pub mod sensitivity;

pub use error::{Error, Result};
