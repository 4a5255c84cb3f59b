use rayon::prelude::*;

use super::config::CompressionConfig;
use super::obs::{fix_dead_columns, inverse_hessian_factor, sweep_row};
use super::quant::{rtn_quantize, QuantizedLayer, SymmetricGrid};
use super::stats::{reconstruction_error, LayerCalibStats};
use crate::error::{require, Result};
use crate::numerics::Matrix;

/// Lazy-update block width of the column sweep.
const BLOCK: usize = 128;

/// Indices of the `n` smallest scores; ties prune the lower index first.
fn smallest(scores: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

/// Zeroes the `n` entries with the lowest `|W_ij| · ‖X_j‖` in every run of
/// `m` consecutive inputs of each row.
pub fn wanda_prune(w: &Matrix, col_norms: &[f64], n: usize, m: usize) -> Result<Matrix> {
    let (rows, cols) = w.shape();
    require(col_norms.len() == cols, || format!("{} norms for {cols} columns", col_norms.len()))?;
    require(m > 0 && n < m && cols % m == 0, || format!("{cols} columns do not split into groups of {m}"))?;
    let mut out = w.clone();
    for r in 0..rows {
        let row = out.row_mut(r);
        for g in (0..cols).step_by(m) {
            let scores: Vec<f64> = (g..g + m).map(|c| row[c].abs() * col_norms[c]).collect();
            for k in smallest(&scores, n) {
                row[g + k] = 0.0;
            }
        }
    }
    Ok(out)
}

/// Second-order n:m pruning with error compensation on the remaining weights.
pub fn sparsegpt_prune(w: &Matrix, hessian: &Matrix, cfg: &CompressionConfig) -> Result<Matrix> {
    let (rows, cols) = w.shape();
    let (n, m) = (cfg.prune_n, cfg.prune_m);
    require(hessian.shape() == (cols, cols), || "hessian does not match layer input".into())?;
    require(m > 0 && n < m && cols % m == 0, || format!("{cols} columns do not split into groups of {m}"))?;
    let mut h = hessian.clone();
    fix_dead_columns(&mut h);
    let u = inverse_hessian_factor(&h, cfg.dampening, cfg.damp_retries)?;
    let block = (BLOCK / m).max(1) * m;
    let mut out = w.clone();
    out.as_mut_slice().par_chunks_mut(cols.max(1)).take(rows).for_each(|row| {
        let mut pruned = vec![false; m];
        sweep_row(row, &u, block, |cur, col| {
            if col % m == 0 {
                let scores: Vec<f64> = (col..col + m)
                    .map(|c| cur[c] * cur[c] / (u.get(c, c) * u.get(c, c)))
                    .collect();
                pruned.iter_mut().for_each(|p| *p = false);
                for k in smallest(&scores, n) {
                    pruned[k] = true;
                }
            }
            if pruned[col % m] {
                0.0
            } else {
                cur[col]
            }
        });
    });
    Ok(out)
}

/// Column order by decreasing Hessian diagonal; equal entries keep their order.
pub fn act_order(hessian: &Matrix) -> Vec<usize> {
    let d = hessian.diag();
    let mut perm: Vec<usize> = (0..d.len()).collect();
    perm.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    perm
}

/// Error-compensated group-wise quantization.
pub fn gptq_quantize(w: &Matrix, hessian: &Matrix, cfg: &CompressionConfig) -> Result<QuantizedLayer> {
    let (rows, cols) = w.shape();
    require(hessian.shape() == (cols, cols), || "hessian does not match layer input".into())?;
    let grid = SymmetricGrid::new(cfg.bits);
    let gs = cfg.group_size();
    let mut h = hessian.clone();
    fix_dead_columns(&mut h);
    let perm = if cfg.desc_act_order {
        act_order(&h)
    } else {
        (0..cols).collect()
    };
    let hp = h.permute_sym(&perm);
    let u = inverse_hessian_factor(&hp, cfg.dampening, cfg.damp_retries)?;
    let groups = cols.div_ceil(gs);
    let mut wp = w.permute_cols(&perm);
    let mut scales = Matrix::zeros(rows, groups);
    wp.as_mut_slice()
        .par_chunks_mut(cols.max(1))
        .zip(scales.as_mut_slice().par_chunks_mut(groups.max(1)))
        .for_each(|(row, srow)| {
            let mut s = 1.0;
            sweep_row(row, &u, BLOCK, |cur, col| {
                if col % gs == 0 {
                    s = grid.scale_for(&cur[col..(col + gs).min(cols)]);
                    srow[col / gs] = s;
                }
                grid.quantize(cur[col], s)
            });
        });
    let mut weights = Matrix::zeros(rows, cols);
    let mut g_idx = vec![0; cols];
    for (p, &c) in perm.iter().enumerate() {
        g_idx[c] = p / gs;
        for r in 0..rows {
            weights.set(r, c, wp.get(r, p));
        }
    }
    Ok(QuantizedLayer {
        weights,
        scales,
        g_idx,
        col_scale: None,
        qmax: grid.qmax,
    })
}

/// Per-channel scales `s_j ∝ mean|x_j|^α` normalised to geometric mean 1
/// over channels with non-zero activity; silent channels get 1.
pub fn channel_scales(mean_abs: &[f64], alpha: f64) -> Vec<f64> {
    let reference = mean_abs.iter().copied().find(|&v| v > 0.0);
    let Some(reference) = reference else {
        return vec![1.0; mean_abs.len()];
    };
    let rel: Vec<Option<f64>> = mean_abs
        .iter()
        .map(|&v| (v > 0.0).then(|| (v / reference).ln()))
        .collect();
    let live: Vec<f64> = rel.iter().flatten().copied().collect();
    let centre = live.iter().sum::<f64>() / live.len() as f64;
    rel.iter()
        .map(|r| r.map_or(1.0, |v| (alpha * (v - centre)).exp()))
        .collect()
}

/// Searches `α ∈ {0, step, …, 1}` for channel scales minimising the layer's
/// output error after round-to-nearest. Returns the layer and chosen `α`.
pub fn aws_quantize(w: &Matrix, stats: &LayerCalibStats, cfg: &CompressionConfig) -> Result<(QuantizedLayer, f64)> {
    let (rows, cols) = w.shape();
    require(stats.mean_abs.len() == cols, || "statistics do not match layer input".into())?;
    let steps = (1.0 / cfg.aws_alpha_step).round() as usize;
    let candidates: Vec<(f64, QuantizedLayer, f64)> = (0..=steps)
        .into_par_iter()
        .map(|k| {
            let alpha = (k as f64 * cfg.aws_alpha_step).min(1.0);
            let s = channel_scales(&stats.mean_abs, alpha);
            let mut scaled = w.clone();
            for r in 0..rows {
                for (v, sj) in scaled.row_mut(r).iter_mut().zip(&s) {
                    *v *= sj;
                }
            }
            let mut q = rtn_quantize(&scaled, cfg.bits, cfg.group_size());
            for r in 0..rows {
                for (v, sj) in q.weights.row_mut(r).iter_mut().zip(&s) {
                    *v /= sj;
                }
            }
            q.col_scale = Some(s);
            let err = reconstruction_error(w, &q.weights, &stats.hessian);
            (alpha, q, err)
        })
        .collect();
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.2 < candidates[best].2 {
            best = i;
        }
    }
    let (alpha, q, _) = candidates.into_iter().nth(best).expect("non-empty grid");
    Ok((q, alpha))
}
