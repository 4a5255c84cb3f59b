//! The desk-scale language model that calibration data is generated from and
//! that the compressors operate on.

pub mod checkpoint;
pub mod corpus;
pub mod eval;
pub mod grad;
pub mod model;
pub mod tokenizer;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use eval::{eval_windows, evaluate, perplexity, EvalResult};
pub use grad::loss_and_grads;
pub use model::{ModelConfig, Projection, TinyLm};
pub use tokenizer::{TokenId, Tokenizer, BOS, EOS, PAD, VOCAB_SIZE};
pub use train::{train, train_with_progress, TrainConfig};

/// Checkpoint shipped with the crate: the default configuration trained on
/// the bundled corpus's training split with the default training settings.
const BUNDLED_MODEL: &[u8] = include_bytes!("../../data/tiny_lm.tlm");

pub fn bundled_model() -> crate::Result<TinyLm> {
    Ok(checkpoint::from_bytes(BUNDLED_MODEL)?)
}

use crate::error::Result;

/// Anything that can be decoded from one token at a time.
pub trait LanguageModel: Sync {
    type State: Send;

    fn vocab_size(&self) -> usize;
    fn context_len(&self) -> usize;
    fn begin(&self) -> Self::State;
    /// Consumes `token` and returns logits for the next position.
    fn step(&self, state: &mut Self::State, token: TokenId) -> Result<Vec<f64>>;
}
