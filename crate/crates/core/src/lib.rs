//! Provincial carbon-emission accounting, hybrid ARIMA–BP forecasting,
//! LMDI decomposition and spatial/group statistics.

pub mod accounting;
pub mod analysis;
pub mod arima;
pub mod bpnet;
pub mod dataio;
pub mod error;
pub mod fixtures;
pub mod hybrid;
pub mod lmdi;
mod optim;
pub mod synthetic;
pub mod tsa;

pub use error::{Error, Result};
