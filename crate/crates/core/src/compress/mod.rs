//! Post-training compression driven by calibration activations: 2:4 pruning
//! (magnitude × activation norm, or second-order with error compensation) and
//! 4-bit weight quantization (error-compensated, round-to-nearest, or
//! activation-weighted channel scaling).

pub mod config;
pub mod methods;
pub mod obs;
pub mod pipeline;
pub mod quant;
pub mod stats;

pub use config::{CompressionConfig, Method};
pub use methods::{act_order, aws_quantize, channel_scales, gptq_quantize, sparsegpt_prune, wanda_prune};
pub use pipeline::{
    block_weight_sparsity, compress_model, layer_name, satisfies_n_m, CompressionOutcome, CompressionReport,
    LayerReport,
};
pub use quant::{rtn_quantize, QuantizedLayer, SymmetricGrid};
pub use stats::{collect_stats, reconstruction_error, LayerCalibStats};
