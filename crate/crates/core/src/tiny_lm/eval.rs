//! Perplexity and next-token accuracy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grad::log_sum_exp;
use super::model::TinyLm;
use super::tokenizer::{TokenId, PAD};
use crate::error::{require, Result};
use crate::numerics::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Mean of per-example perplexities.
    pub ppl: f64,
    /// Fraction of scored positions whose argmax equals the target.
    pub next_token_acc: f64,
    pub scored_tokens: usize,
}

struct ExampleStats {
    nll: f64,
    count: usize,
    correct: usize,
}

/// Scores one example. Examples longer than the model context are split into
/// consecutive windows of `context_len` tokens, each scored independently.
fn example_stats(model: &TinyLm, tokens: &[TokenId]) -> Result<ExampleStats> {
    let mut s = ExampleStats {
        nll: 0.0,
        count: 0,
        correct: 0,
    };
    for window in tokens.chunks(model.config.context_len) {
        if window.len() < 2 {
            continue;
        }
        let logits = model.forward_sequence(window)?;
        for t in 0..window.len() - 1 {
            let target = window[t + 1];
            if target == PAD {
                continue;
            }
            let row = logits.row(t);
            s.nll += log_sum_exp(row) - row[target as usize];
            s.count += 1;
            if argmax(row) == target as usize {
                s.correct += 1;
            }
        }
    }
    Ok(s)
}

pub fn evaluate(model: &TinyLm, data: &[Vec<TokenId>]) -> Result<EvalResult> {
    require(!data.is_empty(), || "no evaluation examples".into())?;
    require(data.iter().all(|s| s.len() >= 2), || {
        "evaluation examples need at least 2 tokens".into()
    })?;
    let stats = data
        .par_iter()
        .map(|s| example_stats(model, s))
        .collect::<Result<Vec<_>>>()?;
    let mut ppl_sum = 0.0;
    let mut correct = 0;
    let mut count = 0;
    for s in &stats {
        require(s.count > 0, || "example has no scored targets".into())?;
        ppl_sum += (s.nll / s.count as f64).exp();
        correct += s.correct;
        count += s.count;
    }
    Ok(EvalResult {
        ppl: ppl_sum / stats.len() as f64,
        next_token_acc: correct as f64 / count as f64,
        scored_tokens: count,
    })
}

/// Per-example `exp(mean NLL)`, averaged over examples.
pub fn perplexity(model: &TinyLm, data: &[Vec<TokenId>]) -> Result<f64> {
    Ok(evaluate(model, data)?.ppl)
}

/// Non-overlapping windows of `len` tokens from the start of a stream.
pub fn eval_windows(stream: &[TokenId], len: usize, max_windows: usize) -> Vec<Vec<TokenId>> {
    stream
        .chunks_exact(len)
        .take(max_windows)
        .map(<[TokenId]>::to_vec)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiny_lm::model::{layer_norm_row, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg0(vocab: usize, d: usize) -> ModelConfig {
        ModelConfig {
            layers: 0,
            heads: 1,
            model_dim: d,
            ffn_dim: 4,
            context_len: 16,
            vocab_size: vocab,
            tie_embeddings: false,
        }
    }

    #[test]
    fn uniform_model_has_vocab_perplexity() {
        let m = TinyLm::zeros(ModelConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data: Vec<Vec<u32>> = (0..3).map(|_| (0..40).map(|_| rng.gen_range(0..256)).collect()).collect();
        let p = perplexity(&m, &data).unwrap();
        assert!((p - 259.0).abs() < 1e-9);
    }

    #[test]
    fn oracle_model_has_unit_perplexity() {
        // Successor model over 8 tokens: token x is always followed by x+1 mod 8.
        let (v, d) = (8, 8);
        let mut m = TinyLm::zeros(cfg0(v, d)).unwrap();
        m.lnf_g.fill(1.0);
        for x in 0..v {
            m.tok_emb.set(x, x, 1.0);
        }
        let ones = vec![1.0; d];
        let zeros = vec![0.0; d];
        let mut normed = vec![0.0; d];
        let out = m.out_proj.as_mut().unwrap();
        for y in 0..v {
            let mut e = vec![0.0; d];
            e[(y + v - 1) % v] = 1.0;
            layer_norm_row(&e, &ones, &zeros, &mut normed);
            for (o, n) in out.row_mut(y).iter_mut().zip(&normed) {
                *o = 1000.0 * n;
            }
        }
        let data = vec![vec![0, 1, 2, 3, 4, 5, 6, 7, 0, 1], vec![5, 6, 7, 0]];
        let r = evaluate(&m, &data).unwrap();
        assert_eq!(r.ppl, 1.0);
        assert_eq!(r.next_token_acc, 1.0);
    }

    #[test]
    fn matches_independent_nll_accumulation() {
        let cfg = ModelConfig {
            layers: 1,
            heads: 2,
            model_dim: 8,
            ffn_dim: 16,
            context_len: 16,
            vocab_size: 20,
            tie_embeddings: true,
        };
        let m = TinyLm::init(cfg, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<Vec<u32>> = (0..4).map(|i| (0..6 + i).map(|_| rng.gen_range(0..20)).collect()).collect();
        // Oracle: per-token log-probabilities from the prefix-only forward.
        let mut want = 0.0;
        for s in &data {
            let mut nll = 0.0;
            for t in 1..s.len() {
                let u = m.forward_logits(&s[..t]).unwrap();
                let z: f64 = u.iter().map(|x| x.exp()).sum();
                nll -= (u[s[t] as usize].exp() / z).ln();
            }
            want += (nll / (s.len() - 1) as f64).exp();
        }
        want /= data.len() as f64;
        let got = perplexity(&m, &data).unwrap();
        assert!((got - want).abs() < 1e-10 * want);
    }

    #[test]
    fn long_examples_are_windowed() {
        let m = TinyLm::zeros(cfg0(8, 4)).unwrap();
        let long: Vec<u32> = (0..40).map(|i| i % 8).collect();
        let r = evaluate(&m, &[long]).unwrap();
        // 16 + 16 + 8 tokens → 15 + 15 + 7 scored targets.
        assert_eq!(r.scored_tokens, 37);
    }
}
