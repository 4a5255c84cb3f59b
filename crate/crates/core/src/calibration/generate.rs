use std::collections::BTreeSet;

use rand::Rng;

use super::sampling::sample_where;
use super::schedule::TemperatureSchedule;
use crate::error::{require, Error, Result};
use crate::tiny_lm::{LanguageModel, TokenId, BOS, EOS, PAD};

/// Consecutive empty segments tolerated before generation gives up.
pub const MAX_EMPTY_SEGMENTS: usize = 16;

/// Upper bound on a single generated example.
pub const MAX_EXAMPLE_LEN: usize = 1 << 20;

/// Generates one example of exactly `len` tokens conditioned only on BOS.
///
/// A segment starts from BOS and ends at EOS or when it fills the model
/// context. Segments are concatenated until `len` tokens accumulate; EOS is
/// never kept, and only the first segment keeps its BOS. The step index of
/// the temperature schedule restarts with every segment, and `constraint`
/// restricts only the very first sampled token of the example. BOS and PAD
/// are never sampled.
pub fn generate_example<M: LanguageModel, R: Rng + ?Sized>(
    model: &M,
    schedule: &TemperatureSchedule,
    len: usize,
    rng: &mut R,
    constraint: Option<&BTreeSet<TokenId>>,
) -> Result<Vec<TokenId>> {
    schedule.validate()?;
    require(len >= 1 && len <= MAX_EXAMPLE_LEN, || {
        format!("example length {len} outside 1..={MAX_EXAMPLE_LEN}")
    })?;
    require(constraint.map_or(true, |c| !c.is_empty()), || {
        "stop-word constraint set is empty".into()
    })?;
    let ctx = model.context_len();
    let mut out = Vec::with_capacity(len);
    out.push(BOS);
    let mut first_segment = true;
    let mut empty_run = 0;
    while out.len() < len {
        let mut state = model.begin();
        let mut logits = model.step(&mut state, BOS)?;
        let mut seg_len = 1;
        let mut produced = 0;
        let mut i = 1;
        while out.len() < len {
            let t = schedule.temperature(i);
            let tok = match constraint {
                Some(set) if first_segment && i == 1 => {
                    sample_where(&logits, t, rng, |k| set.contains(&(k as TokenId)))?
                }
                _ => sample_where(&logits, t, rng, |k| {
                    let k = k as TokenId;
                    k != BOS && k != PAD
                })?,
            };
            if tok == EOS {
                break;
            }
            out.push(tok);
            produced += 1;
            seg_len += 1;
            i += 1;
            if seg_len >= ctx {
                break;
            }
            logits = model.step(&mut state, tok)?;
        }
        first_segment = false;
        if produced == 0 && out.len() < len {
            empty_run += 1;
            if empty_run >= MAX_EMPTY_SEGMENTS {
                return Err(Error::GenerationStalled {
                    segments: empty_run,
                });
            }
        } else {
            empty_run = 0;
        }
    }
    out.truncate(len);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiny_lm::VOCAB_SIZE;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Emits `token` until the segment holds `eos_at` generated tokens, then EOS.
    struct Scripted {
        token: TokenId,
        eos_at: Option<usize>,
        ctx: usize,
    }

    impl LanguageModel for Scripted {
        type State = usize;
        fn vocab_size(&self) -> usize {
            VOCAB_SIZE
        }
        fn context_len(&self) -> usize {
            self.ctx
        }
        fn begin(&self) -> usize {
            0
        }
        fn step(&self, pos: &mut usize, _token: TokenId) -> Result<Vec<f64>> {
            *pos += 1;
            let mut u = vec![0.0; VOCAB_SIZE];
            // pos-1 tokens have been generated after BOS so far.
            if self.eos_at.is_some_and(|k| *pos > k) {
                u[EOS as usize] = 50.0;
            } else {
                u[self.token as usize] = 50.0;
            }
            Ok(u)
        }
    }

    #[test]
    fn greedy_constant_token() {
        let m = Scripted {
            token: 7,
            eos_at: None,
            ctx: 64,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ex = generate_example(&m, &TemperatureSchedule::constant(0.0), 8, &mut rng, None).unwrap();
        assert_eq!(ex, vec![BOS, 7, 7, 7, 7, 7, 7, 7]);
    }

    #[test]
    fn segments_concatenate_after_eos() {
        // EOS is emitted at step 3, so every segment yields two tokens.
        let m = Scripted {
            token: 9,
            eos_at: Some(2),
            ctx: 64,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ex = generate_example(&m, &TemperatureSchedule::constant(0.0), 10, &mut rng, None).unwrap();
        assert_eq!(ex.len(), 10);
        assert_eq!(ex[0], BOS);
        assert!(ex[1..].iter().all(|&t| t == 9));
        // 3 tokens from the first segment + 2 from each of the next four.
        let segments = 1 + (10 - 3usize).div_ceil(2);
        assert!(segments >= 4);
    }

    #[test]
    fn context_limit_ends_segment() {
        let m = Scripted {
            token: 3,
            eos_at: None,
            ctx: 4,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ex = generate_example(&m, &TemperatureSchedule::constant(1.0), 20, &mut rng, None).unwrap();
        assert_eq!(ex.len(), 20);
        assert_eq!(ex.iter().filter(|&&t| t == BOS).count(), 1);
    }

    #[test]
    fn all_eos_stalls() {
        let m = Scripted {
            token: 3,
            eos_at: Some(0),
            ctx: 16,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = generate_example(&m, &TemperatureSchedule::constant(1.0), 5, &mut rng, None).unwrap_err();
        assert!(matches!(err, Error::GenerationStalled { segments: 16 }));
    }

    #[test]
    fn constraint_applies_to_first_token_only() {
        let m = Scripted {
            token: 200,
            eos_at: None,
            ctx: 64,
        };
        let set: BTreeSet<TokenId> = [97, 98].into();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ex = generate_example(&m, &TemperatureSchedule::constant(0.0), 5, &mut rng, Some(&set)).unwrap();
        assert_eq!(ex, vec![BOS, 97, 200, 200, 200]);
    }
}
