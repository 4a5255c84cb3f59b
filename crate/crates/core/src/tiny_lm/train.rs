//! Adam training loop over random windows of a token stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grad::loss_and_grads;
use super::model::TinyLm;
use super::tokenizer::{TokenId, BOS};
use crate::error::{require, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 8,
            learning_rate: 2e-3,
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            grad_clip: Some(1.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        require(self.learning_rate > 0.0, || "learning_rate must be > 0".into())?;
        require(self.batch_size >= 1, || "batch_size must be >= 1".into())
    }
}

/// Draws training windows of `context_len` tokens. Half of them start at a
/// document boundary (a BOS token) so the model learns how text begins.
struct WindowSampler<'a> {
    corpus: &'a [TokenId],
    starts: Vec<usize>,
    window: usize,
}

impl<'a> WindowSampler<'a> {
    fn new(corpus: &'a [TokenId], window: usize) -> Self {
        let last = corpus.len() - window;
        let starts = corpus
            .iter()
            .enumerate()
            .filter(|&(i, &t)| t == BOS && i <= last)
            .map(|(i, _)| i)
            .collect();
        Self {
            corpus,
            starts,
            window,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<TokenId> {
        let from_doc = rng.gen_bool(0.5);
        let off = if from_doc && !self.starts.is_empty() {
            self.starts[rng.gen_range(0..self.starts.len())]
        } else {
            rng.gen_range(0..=self.corpus.len() - self.window)
        };
        self.corpus[off..off + self.window].to_vec()
    }
}

pub fn train(model: &TinyLm, corpus: &[TokenId], cfg: &TrainConfig) -> Result<TinyLm> {
    train_with_progress(model, corpus, cfg, |_, _| {})
}

/// Runs `cfg.steps` Adam updates; `on_step(step, loss)` is called after each.
pub fn train_with_progress(
    model: &TinyLm,
    corpus: &[TokenId],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(usize, f64),
) -> Result<TinyLm> {
    cfg.validate()?;
    let window = model.config.context_len;
    if corpus.len() < window {
        return Err(Error::CorpusTooSmall {
            len: corpus.len(),
            need: window,
        });
    }
    let mut params = model.clone();
    if cfg.steps == 0 {
        return Ok(params);
    }
    let sampler = WindowSampler::new(corpus, window);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut m = model.zeros_like();
    let mut v = model.zeros_like();
    for step in 1..=cfg.steps {
        let batch: Vec<Vec<TokenId>> = (0..cfg.batch_size).map(|_| sampler.sample(&mut rng)).collect();
        let (loss, mut grads) = loss_and_grads(&params, &batch)?;
        if let Some(clip) = cfg.grad_clip {
            let norm = grads
                .tensors()
                .iter()
                .flat_map(|t| t.data.iter())
                .map(|g| g * g)
                .sum::<f64>()
                .sqrt();
            if norm > clip {
                let s = clip / norm;
                for t in grads.tensors_mut() {
                    t.iter_mut().for_each(|g| *g *= s);
                }
            }
        }
        let bc1 = 1.0 - cfg.beta1.powi(step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(step as i32);
        for (((p, g), mt), vt) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(m.tensors_mut())
            .zip(v.tensors_mut())
        {
            for i in 0..p.len() {
                let gi = g.data[i];
                mt[i] = cfg.beta1 * mt[i] + (1.0 - cfg.beta1) * gi;
                vt[i] = cfg.beta2 * vt[i] + (1.0 - cfg.beta2) * gi * gi;
                let mhat = mt[i] / bc1;
                let vhat = vt[i] / bc2;
                p[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
        on_step(step, loss);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiny_lm::eval::perplexity;
    use crate::tiny_lm::model::ModelConfig;
    use crate::tiny_lm::Tokenizer;

    fn tiny() -> ModelConfig {
        ModelConfig {
            layers: 1,
            heads: 2,
            model_dim: 16,
            ffn_dim: 32,
            context_len: 16,
            vocab_size: 259,
            tie_embeddings: true,
        }
    }

    fn corpus() -> Vec<TokenId> {
        let text = "the cat sat on the mat.\n\nthe dog sat on the log.\n\n".repeat(20);
        Tokenizer::new().encode_documents(&text)
    }

    #[test]
    fn zero_steps_is_identity() {
        let m = TinyLm::init(tiny(), 1).unwrap();
        let cfg = TrainConfig {
            steps: 0,
            ..TrainConfig::default()
        };
        assert_eq!(train(&m, &corpus(), &cfg).unwrap(), m);
    }

    #[test]
    fn small_corpus_is_rejected() {
        let m = TinyLm::init(tiny(), 1).unwrap();
        let err = train(&m, &[1, 2, 3], &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::CorpusTooSmall { len: 3, need: 16 }));
    }

    #[test]
    fn training_is_deterministic_and_lowers_perplexity() {
        let m = TinyLm::init(tiny(), 3).unwrap();
        let data = corpus();
        let cfg = TrainConfig {
            steps: 60,
            batch_size: 4,
            learning_rate: 1e-2,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = train(&m, &data, &cfg).unwrap();
        let b = train(&m, &data, &cfg).unwrap();
        assert_eq!(a, b);
        let held: Vec<Vec<TokenId>> = data.chunks_exact(16).take(8).map(<[u32]>::to_vec).collect();
        let before = perplexity(&m, &held).unwrap();
        let after = perplexity(&a, &held).unwrap();
        assert!(after < before, "{after} !< {before}");
    }
}
