use serde::{Deserialize, Serialize};

use crate::numerics::Matrix;

/// Symmetric uniform grid with levels `{-qmax..=qmax} · scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetricGrid {
    pub qmax: i64,
}

impl SymmetricGrid {
    pub fn new(bits: u32) -> Self {
        Self { qmax: (1i64 << (bits - 1)) - 1 }
    }

    /// `max|w| / qmax`, or 1 when every value is zero.
    pub fn scale_for(&self, values: &[f64]) -> f64 {
        let m = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if m == 0.0 {
            1.0
        } else {
            m / self.qmax as f64
        }
    }

    pub fn level(&self, w: f64, scale: f64) -> i64 {
        ((w / scale).round_ties_even() as i64).clamp(-self.qmax, self.qmax)
    }

    pub fn quantize(&self, w: f64, scale: f64) -> f64 {
        self.level(w, scale) as f64 * scale
    }
}

/// A quantized weight matrix together with the metadata needed to verify
/// that every entry lies on its grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedLayer {
    /// Dequantized weights in the original column order.
    pub weights: Matrix,
    /// `rows × groups` step sizes.
    pub scales: Matrix,
    /// Group index of every original input column.
    pub g_idx: Vec<usize>,
    /// Per-input-channel scale folded into the weights: stored entries equal
    /// `level · scale / col_scale[j]`.
    pub col_scale: Option<Vec<f64>>,
    pub qmax: i64,
}

impl QuantizedLayer {
    /// Number of entries that are not exactly reproduced by their grid.
    pub fn grid_violations(&self) -> usize {
        let mut bad = 0;
        for r in 0..self.weights.rows() {
            for (c, &w) in self.weights.row(r).iter().enumerate() {
                let s = self.scales.get(r, self.g_idx[c]);
                let cs = self.col_scale.as_ref().map_or(1.0, |v| v[c]);
                let level = ((w * cs / s).round_ties_even() as i64).clamp(-self.qmax, self.qmax);
                if level as f64 * s / cs != w {
                    bad += 1;
                }
            }
        }
        bad
    }

    /// Largest number of distinct levels used by any (row, group).
    pub fn distinct_levels_per_group(&self) -> usize {
        let mut max_levels = 0;
        let groups = self.scales.cols();
        for r in 0..self.weights.rows() {
            for g in 0..groups {
                let s = self.scales.get(r, g);
                let mut seen = std::collections::BTreeSet::new();
                for (c, &w) in self.weights.row(r).iter().enumerate() {
                    if self.g_idx[c] == g {
                        let cs = self.col_scale.as_ref().map_or(1.0, |v| v[c]);
                        seen.insert((w * cs / s).round_ties_even() as i64);
                    }
                }
                max_levels = max_levels.max(seen.len());
            }
        }
        max_levels
    }
}

/// Round-to-nearest with a per-row scale for each run of `group_size`
/// consecutive columns.
pub fn rtn_quantize(w: &Matrix, bits: u32, group_size: usize) -> QuantizedLayer {
    let grid = SymmetricGrid::new(bits);
    let (rows, cols) = w.shape();
    let groups = cols.div_ceil(group_size);
    let mut out = Matrix::zeros(rows, cols);
    let mut scales = Matrix::zeros(rows, groups);
    for r in 0..rows {
        let src = w.row(r);
        for g in 0..groups {
            let span = g * group_size..((g + 1) * group_size).min(cols);
            let s = grid.scale_for(&src[span.clone()]);
            scales.set(r, g, s);
            for c in span {
                out.set(r, c, grid.quantize(src[c], s));
            }
        }
    }
    QuantizedLayer {
        weights: out,
        scales,
        g_idx: (0..cols).map(|c| c / group_size).collect(),
        col_scale: None,
        qmax: grid.qmax,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_row_is_exact() {
        for c in [0.0, 0.3, -1.7, 1e-3] {
            let w = Matrix::from_vec(1, 6, vec![c; 6]).unwrap();
            let q = rtn_quantize(&w, 4, 128);
            for &v in q.weights.row(0) {
                assert!((v - c).abs() <= 1e-15 * c.abs().max(1.0), "{v} vs {c}");
            }
        }
    }

    #[test]
    fn ties_round_to_even() {
        let g = SymmetricGrid::new(4);
        assert_eq!(g.level(2.5, 1.0), 2);
        assert_eq!(g.level(3.5, 1.0), 4);
        assert_eq!(g.level(-0.5, 1.0), 0);
        assert_eq!(g.level(100.0, 1.0), 7);
        assert_eq!(g.scale_for(&[0.0, 0.0]), 1.0);
    }

    proptest! {
        #[test]
        fn rtn_stays_on_grid(vals in prop::collection::vec(-3.0f64..3.0, 8 * 20), gs in 1usize..21) {
            let w = Matrix::from_vec(8, 20, vals).unwrap();
            let q = rtn_quantize(&w, 4, gs);
            prop_assert_eq!(q.grid_violations(), 0);
            prop_assert!(q.distinct_levels_per_group() <= 15);
            for r in 0..8 {
                for c in 0..20 {
                    let s = q.scales.get(r, c / gs);
                    prop_assert!((q.weights.get(r, c) - w.get(r, c)).abs() <= s / 2.0 + 1e-12);
                }
            }
        }
    }
}
