use std::collections::BTreeSet;

use rand::Rng;

use crate::error::{require, Result};
use crate::numerics::softmax_with_temperature;
use crate::tiny_lm::TokenId;

/// Draws a token from `softmax(logits / t)`, restricted to `allowed` and
/// renormalised when a set is given. `t == 0` is the argmax over the
/// permitted tokens.
pub fn sample_next_token<R: Rng + ?Sized>(
    logits: &[f64],
    t: f64,
    rng: &mut R,
    allowed: Option<&BTreeSet<TokenId>>,
) -> Result<TokenId> {
    match allowed {
        None => sample_where(logits, t, rng, |_| true),
        Some(set) => {
            require(!set.is_empty(), || "allowed token set is empty".into())?;
            sample_where(logits, t, rng, |i| set.contains(&(i as TokenId)))
        }
    }
}

/// Samples among the indices for which `permit` holds.
pub(crate) fn sample_where<R: Rng + ?Sized>(
    logits: &[f64],
    t: f64,
    rng: &mut R,
    permit: impl Fn(usize) -> bool,
) -> Result<TokenId> {
    let ids: Vec<usize> = (0..logits.len()).filter(|&i| permit(i)).collect();
    require(!ids.is_empty(), || {
        "no permitted token lies inside the vocabulary".into()
    })?;
    let sub: Vec<f64> = ids.iter().map(|&i| logits[i]).collect();
    let p = softmax_with_temperature(&sub, t)?;
    if t == 0.0 {
        let k = p.iter().position(|&v| v == 1.0).expect("one-hot");
        return Ok(ids[k] as TokenId);
    }
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last_positive = None;
    for (k, &pk) in p.iter().enumerate() {
        if pk > 0.0 {
            last_positive = Some(k);
        }
        cum += pk;
        if u < cum {
            return Ok(ids[k] as TokenId);
        }
    }
    // Rounding left the cumulative sum just below u.
    Ok(ids[last_positive.expect("softmax has positive mass")] as TokenId)
}
