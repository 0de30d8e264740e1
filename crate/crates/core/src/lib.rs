//! Sleep-like consolidation for bias-free ReLU networks.

pub mod analysis;
pub mod data;
pub mod error;
pub mod experiments;
pub mod io;
pub mod net;
pub mod presets;
pub mod snn;

pub use error::{Error, Result};
