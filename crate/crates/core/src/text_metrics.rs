//! Automatic descriptors of a token-sequence set: perplexity under a model,
//! within-sequence repetition, vocabulary coverage, pooled n-gram diversity
//! and the rank-frequency (Zipf) exponent.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::tiny_lm::{perplexity, TinyLm, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextMetricsReport {
    pub ppl: f64,
    pub repetitions: f64,
    pub coverage: f64,
    pub diversity: f64,
    pub zipf: f64,
}

impl TextMetricsReport {
    pub const CSV_HEADER: [&'static str; 5] = ["PPL", "Rep.", "Cov.", "Div.", "Zipf"];

    pub fn csv_row(&self) -> [String; 5] {
        [self.ppl, self.repetitions, self.coverage, self.diversity, self.zipf].map(|v| format!("{v:.6}"))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = Self::CSV_HEADER.join(",");
        text.push('\n');
        text.push_str(&self.csv_row().join(","));
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn non_empty(data: &[Vec<TokenId>]) -> Result<()> {
    require(!data.is_empty(), || "empty sequence set".into())
}

/// Mean over all positions of the indicator "token already occurred earlier
/// in the same sequence".
pub fn repetition_fraction(data: &[Vec<TokenId>]) -> Result<f64> {
    non_empty(data)?;
    let len = data[0].len();
    require(len > 0, || "sequences are empty".into())?;
    require(data.iter().all(|s| s.len() == len), || "sequences have ragged lengths".into())?;
    let mut repeats = 0usize;
    let mut seen = HashSet::new();
    for s in data {
        seen.clear();
        for &t in s {
            if !seen.insert(t) {
                repeats += 1;
            }
        }
    }
    Ok(repeats as f64 / (data.len() * len) as f64)
}

/// Distinct ids present divided by the full vocabulary size.
pub fn vocabulary_coverage(data: &[Vec<TokenId>], vocab_size: usize) -> Result<f64> {
    non_empty(data)?;
    require(vocab_size > 0, || "vocabulary is empty".into())?;
    let distinct: HashSet<TokenId> = data.iter().flatten().copied().collect();
    require(distinct.iter().all(|&t| (t as usize) < vocab_size), || {
        "token id outside vocabulary".into()
    })?;
    Ok(distinct.len() as f64 / vocab_size as f64)
}

/// Mean over `n = 1..=max_n` of unique/total n-grams, pooled over the set.
/// N-grams never cross sequence boundaries.
pub fn ngram_diversity(data: &[Vec<TokenId>], max_n: usize) -> Result<f64> {
    non_empty(data)?;
    require(max_n >= 1, || "max_n must be >= 1".into())?;
    require(data.iter().all(|s| s.len() >= max_n), || {
        format!("every sequence needs at least {max_n} tokens")
    })?;
    let mut ratios = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let mut unique = HashSet::new();
        let mut total = 0usize;
        for s in data {
            for g in s.windows(n) {
                unique.insert(g);
                total += 1;
            }
        }
        ratios.push((unique.len() as u128, total as u128));
    }
    Ok(mean_of_ratios(&ratios))
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Mean of `p/q` fractions, summed exactly while the numbers fit so the
/// result is a single correctly rounded division.
fn mean_of_ratios(ratios: &[(u128, u128)]) -> f64 {
    let exact = ratios.iter().try_fold((0u128, 1u128), |(n, d), &(p, q)| {
        let num = n.checked_mul(q)?.checked_add(p.checked_mul(d)?)?;
        let den = d.checked_mul(q)?;
        let g = gcd(num, den).max(1);
        Some((num / g, den / g))
    });
    match exact.and_then(|(n, d)| {
        let den = d.checked_mul(ratios.len() as u128)?;
        let g = gcd(n, den).max(1);
        Some((n / g, den / g))
    }) {
        Some((n, d)) if n < 1 << 53 && d < 1 << 53 => n as f64 / d as f64,
        _ => ratios.iter().map(|&(p, q)| p as f64 / q as f64).sum::<f64>() / ratios.len() as f64,
    }
}

/// Negated least-squares slope of `ln frequency` against `ln rank`.
pub fn zipf_coefficient(data: &[Vec<TokenId>]) -> Result<f64> {
    non_empty(data)?;
    let mut counts: BTreeMap<TokenId, u64> = BTreeMap::new();
    for &t in data.iter().flatten() {
        *counts.entry(t).or_default() += 1;
    }
    zipf_from_counts(counts.into_values().collect())
}

/// Zipf exponent from raw frequencies (any order; zeros ignored).
pub fn zipf_from_counts(mut counts: Vec<u64>) -> Result<f64> {
    counts.retain(|&c| c > 0);
    require(counts.len() >= 2, || "need at least two distinct tokens".into())?;
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let n = counts.len() as f64;
    let xs: Vec<f64> = (1..=counts.len()).map(|r| (r as f64).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    Ok(-sxy / sxx)
}

/// All five metrics; perplexity is the model's mean per-example perplexity.
pub fn analyze(model: &TinyLm, data: &[Vec<TokenId>]) -> Result<TextMetricsReport> {
    non_empty(data)?;
    Ok(TextMetricsReport {
        ppl: perplexity(model, data)?,
        repetitions: repetition_fraction(data)?,
        coverage: vocabulary_coverage(data, model.config.vocab_size)?,
        diversity: ngram_diversity(data, 4)?,
        zipf: zipf_coefficient(data)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiny_lm::VOCAB_SIZE;
    use proptest::prelude::*;

    #[test]
    fn hand_cases() {
        assert_eq!(repetition_fraction(&[vec![1, 2, 1]]).unwrap(), 1.0 / 3.0);
        assert_eq!(repetition_fraction(&[vec![1, 2, 3]]).unwrap(), 0.0);
        assert_eq!(ngram_diversity(&[vec![5, 5, 5, 5]], 4).unwrap(), 25.0 / 48.0);
        assert_eq!(ngram_diversity(&[vec![1, 2, 3, 4, 5]], 4).unwrap(), 1.0);
        assert_eq!(vocabulary_coverage(&[vec![7, 9, 7]], VOCAB_SIZE).unwrap(), 2.0 / 259.0);
        let all: Vec<TokenId> = (0..VOCAB_SIZE as TokenId).collect();
        assert_eq!(vocabulary_coverage(&[all], VOCAB_SIZE).unwrap(), 1.0);
    }

    #[test]
    fn contract_violations() {
        assert!(repetition_fraction(&[]).is_err());
        assert!(repetition_fraction(&[vec![1, 2], vec![1]]).is_err());
        assert!(ngram_diversity(&[vec![1, 2, 3]], 4).is_err());
        assert!(zipf_coefficient(&[vec![3, 3, 3]]).is_err());
        assert!(vocabulary_coverage(&[], 10).is_err());
    }

    #[test]
    fn uniform_frequencies_have_zero_exponent() {
        let z = zipf_from_counts(vec![17; 50]).unwrap();
        assert!(z.abs() < 1e-9);
    }

    #[test]
    fn recovers_constructed_power_law() {
        let counts: Vec<u64> = (1..=200).map(|r| (1e6 * (r as f64).powf(-1.1)).round() as u64).collect();
        let z = zipf_from_counts(counts).unwrap();
        assert!((z - 1.1).abs() < 0.05, "{z}");
    }

    #[test]
    fn report_csv_layout() {
        let r = TextMetricsReport {
            ppl: 12.5,
            repetitions: 0.25,
            coverage: 0.5,
            diversity: 0.75,
            zipf: 1.0,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        r.write_csv(&p).unwrap();
        assert_eq!(
            std::fs::read_to_string(p).unwrap(),
            "PPL,Rep.,Cov.,Div.,Zipf\n12.500000,0.250000,0.500000,0.750000,1.000000\n"
        );
    }

    fn set_strategy() -> impl Strategy<Value = Vec<Vec<TokenId>>> {
        (1usize..6, 4usize..24).prop_flat_map(|(n, l)| {
            prop::collection::vec(prop::collection::vec(0u32..12, l), n)
        })
    }

    proptest! {
        #[test]
        fn repetition_ignores_sequence_order(mut data in set_strategy()) {
            let a = repetition_fraction(&data).unwrap();
            data.reverse();
            prop_assert!((a - repetition_fraction(&data).unwrap()).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn duplication_never_raises_diversity(data in set_strategy()) {
            let a = ngram_diversity(&data, 4).unwrap();
            let doubled: Vec<_> = data.iter().chain(&data).cloned().collect();
            prop_assert!(ngram_diversity(&doubled, 4).unwrap() <= a + 1e-15);
            prop_assert!(a > 0.0 && a <= 1.0);
        }

        #[test]
        fn coverage_is_monotone(data in set_strategy(), extra in prop::collection::vec(0u32..40, 4)) {
            let a = vocabulary_coverage(&data, 40).unwrap();
            let mut more = data.clone();
            more.push(extra);
            prop_assert!(vocabulary_coverage(&more, 40).unwrap() >= a);
        }

        #[test]
        fn zipf_invariant_to_duplication(data in set_strategy()) {
            let distinct: HashSet<_> = data.iter().flatten().collect();
            prop_assume!(distinct.len() >= 2);
            let a = zipf_coefficient(&data).unwrap();
            let tripled: Vec<_> = data.iter().chain(&data).chain(&data).cloned().collect();
            prop_assert!((a - zipf_coefficient(&tripled).unwrap()).abs() < 1e-9);
        }
    }
}
