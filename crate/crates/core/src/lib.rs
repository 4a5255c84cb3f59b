//! Self-calibration toolkit: synthesise calibration data from a small language
//! model, compress the model with calibration-driven pruning and quantization,
//! and measure both the compressed model and the calibration text.

pub mod calibration;
pub mod cli;
pub mod compress;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod text_metrics;
pub mod tiny_lm;

pub use error::{Error, Result};
