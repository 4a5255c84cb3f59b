//! Mean next-token cross-entropy and its analytic gradient.
//!
//! Sequences are processed independently (optionally in parallel) and their
//! gradients are summed in batch order, so the result does not depend on the
//! number of worker threads.

use rayon::prelude::*;

use super::model::{attend_row, gelu, gelu_grad, layer_norm_row, linear, Block, TinyLm};
use super::tokenizer::{TokenId, PAD};
use crate::error::{require, Result};
use crate::numerics::{axpy, dot, Matrix};

struct LnCache {
    xhat: Matrix,
    rstd: Vec<f64>,
}

fn layer_norm_cached(x: &Matrix, g: &[f64], b: &[f64]) -> (Matrix, LnCache) {
    let (t, d) = x.shape();
    let mut out = Matrix::zeros(t, d);
    let mut xhat = Matrix::zeros(t, d);
    let mut rstd = Vec::with_capacity(t);
    let ones = vec![1.0; d];
    let zeros = vec![0.0; d];
    for r in 0..t {
        rstd.push(layer_norm_row(x.row(r), &ones, &zeros, xhat.row_mut(r)));
        layer_norm_row(x.row(r), g, b, out.row_mut(r));
    }
    (out, LnCache { xhat, rstd })
}

/// Accumulates into `dg`/`db` and returns `dx`.
fn layer_norm_backward(dy: &Matrix, c: &LnCache, g: &[f64], dg: &mut [f64], db: &mut [f64]) -> Matrix {
    let (t, d) = dy.shape();
    let mut dx = Matrix::zeros(t, d);
    let mut dxhat = vec![0.0; d];
    for r in 0..t {
        let dyr = dy.row(r);
        let xh = c.xhat.row(r);
        for i in 0..d {
            dg[i] += dyr[i] * xh[i];
            db[i] += dyr[i];
            dxhat[i] = dyr[i] * g[i];
        }
        let mean_dxhat = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dxhat_xhat = dot(&dxhat, xh) / d as f64;
        let rstd = c.rstd[r];
        for (i, o) in dx.row_mut(r).iter_mut().enumerate() {
            *o = rstd * (dxhat[i] - mean_dxhat - xh[i] * mean_dxhat_xhat);
        }
    }
    dx
}

/// Backward of `y = x·Wᵀ + b`: accumulates `dW += dyᵀ·x`, `db += Σ dy`, returns `dy·W`.
fn linear_backward(dy: &Matrix, x: &Matrix, w: &Matrix, dw: &mut Matrix, db: &mut [f64]) -> Matrix {
    let mut dx = Matrix::zeros(x.rows(), w.cols());
    for t in 0..dy.rows() {
        let dyr = dy.row(t);
        let xr = x.row(t);
        for (o, &g) in dyr.iter().enumerate() {
            if g != 0.0 {
                axpy(g, xr, dw.row_mut(o));
                db[o] += g;
                axpy(g, w.row(o), dx.row_mut(t));
            }
        }
    }
    dx
}

struct BlockCache {
    ln1: LnCache,
    h1: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    probs: Vec<f64>,
    a: Matrix,
    ln2: LnCache,
    h2: Matrix,
    f: Matrix,
    g: Matrix,
}

fn block_forward_cached(b: &Block, x: &Matrix, heads: usize) -> (Matrix, BlockCache) {
    let (h1, ln1) = layer_norm_cached(x, &b.ln1_g, &b.ln1_b);
    let q = linear(&h1, &b.wq, &b.bq);
    let k = linear(&h1, &b.wk, &b.bk);
    let v = linear(&h1, &b.wv, &b.bv);
    let mut a = Matrix::zeros(q.rows(), q.cols());
    let mut probs = Vec::new();
    for t in 0..q.rows() {
        attend_row(q.row(t), k.as_slice(), v.as_slice(), t + 1, heads, a.row_mut(t), Some(&mut probs));
    }
    let o = linear(&a, &b.wo, &b.bo);
    let mut xm = x.clone();
    for (xi, oi) in xm.as_mut_slice().iter_mut().zip(o.as_slice()) {
        *xi += oi;
    }
    let (h2, ln2) = layer_norm_cached(&xm, &b.ln2_g, &b.ln2_b);
    let f = linear(&h2, &b.w_in, &b.b_in);
    let mut g = f.clone();
    for v in g.as_mut_slice() {
        *v = gelu(*v);
    }
    let m = linear(&g, &b.w_out, &b.b_out);
    for (xi, mi) in xm.as_mut_slice().iter_mut().zip(m.as_slice()) {
        *xi += mi;
    }
    (
        xm,
        BlockCache {
            ln1,
            h1,
            q,
            k,
            v,
            probs,
            a,
            ln2,
            h2,
            f,
            g,
        },
    )
}

/// Returns `dx` for the block input; accumulates parameter grads into `gb`.
fn block_backward(b: &Block, c: &BlockCache, dx_out: &Matrix, heads: usize, gb: &mut Block) -> Matrix {
    // FFN branch.
    let dg = linear_backward(dx_out, &c.g, &b.w_out, &mut gb.w_out, &mut gb.b_out);
    let mut df = dg;
    for (d, &f) in df.as_mut_slice().iter_mut().zip(c.f.as_slice()) {
        *d *= gelu_grad(f);
    }
    let dh2 = linear_backward(&df, &c.h2, &b.w_in, &mut gb.w_in, &mut gb.b_in);
    let mut dx_mid = layer_norm_backward(&dh2, &c.ln2, &b.ln2_g, &mut gb.ln2_g, &mut gb.ln2_b);
    for (a, b) in dx_mid.as_mut_slice().iter_mut().zip(dx_out.as_slice()) {
        *a += b;
    }

    // Attention branch.
    let da = linear_backward(&dx_mid, &c.a, &b.wo, &mut gb.wo, &mut gb.bo);
    let (t_len, d) = c.q.shape();
    let hd = d / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut dq = Matrix::zeros(t_len, d);
    let mut dk = Matrix::zeros(t_len, d);
    let mut dv = Matrix::zeros(t_len, d);
    let mut dp = Vec::with_capacity(t_len);
    let mut poff = 0;
    for t in 0..t_len {
        let n = t + 1;
        for h in 0..heads {
            let off = h * hd;
            let p = &c.probs[poff..poff + n];
            poff += n;
            let dout = &da.row(t)[off..off + hd];
            dp.clear();
            for (j, &pj) in p.iter().enumerate() {
                dp.push(dot(dout, &c.v.row(j)[off..off + hd]));
                axpy(pj, dout, &mut dv.row_mut(j)[off..off + hd]);
            }
            let s = dot(p, &dp);
            let qt = &c.q.row(t)[off..off + hd];
            for (j, &pj) in p.iter().enumerate() {
                let ds = pj * (dp[j] - s) * scale;
                if ds != 0.0 {
                    axpy(ds, &c.k.row(j)[off..off + hd], &mut dq.row_mut(t)[off..off + hd]);
                    axpy(ds, qt, &mut dk.row_mut(j)[off..off + hd]);
                }
            }
        }
    }
    let mut dh1 = linear_backward(&dq, &c.h1, &b.wq, &mut gb.wq, &mut gb.bq);
    let dh1k = linear_backward(&dk, &c.h1, &b.wk, &mut gb.wk, &mut gb.bk);
    let dh1v = linear_backward(&dv, &c.h1, &b.wv, &mut gb.wv, &mut gb.bv);
    for ((a, b), c) in dh1.as_mut_slice().iter_mut().zip(dh1k.as_slice()).zip(dh1v.as_slice()) {
        *a += b + c;
    }
    let mut dx = layer_norm_backward(&dh1, &c.ln1, &b.ln1_g, &mut gb.ln1_g, &mut gb.ln1_b);
    for (a, b) in dx.as_mut_slice().iter_mut().zip(dx_mid.as_slice()) {
        *a += b;
    }
    dx
}

/// Log-sum-exp of a row, with max subtraction.
pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Summed NLL, number of scored targets, and the gradient of the summed NLL.
fn sequence_loss_and_grads(model: &TinyLm, tokens: &[TokenId]) -> (f64, usize, TinyLm) {
    let cfg = &model.config;
    let mut grads = model.zeros_like();
    let mut x = model.embed(tokens);
    let mut caches = Vec::with_capacity(model.blocks.len());
    for b in &model.blocks {
        let (nx, c) = block_forward_cached(b, &x, cfg.heads);
        caches.push(c);
        x = nx;
    }
    let (hf, lnf) = layer_norm_cached(&x, &model.lnf_g, &model.lnf_b);

    let t_len = tokens.len();
    let w_out = model.output_matrix();
    let mut nll = 0.0;
    let mut count = 0;
    let mut dlogits = Matrix::zeros(t_len, cfg.vocab_size);
    for t in 0..t_len - 1 {
        let target = tokens[t + 1];
        if target == PAD {
            continue;
        }
        let logits = model.logits_row(hf.row(t));
        let lse = log_sum_exp(&logits);
        nll += lse - logits[target as usize];
        count += 1;
        let dl = dlogits.row_mut(t);
        for (o, &u) in dl.iter_mut().zip(&logits) {
            *o = (u - lse).exp();
        }
        dl[target as usize] -= 1.0;
    }

    let mut dhf = Matrix::zeros(t_len, cfg.model_dim);
    {
        let dw = match grads.out_proj.as_mut() {
            Some(p) => p,
            None => &mut grads.tok_emb,
        };
        for t in 0..t_len {
            let dl = dlogits.row(t);
            let hr = hf.row(t);
            for (v, &g) in dl.iter().enumerate() {
                if g != 0.0 {
                    axpy(g, hr, dw.row_mut(v));
                    axpy(g, w_out.row(v), dhf.row_mut(t));
                }
            }
        }
    }
    let mut dx = layer_norm_backward(&dhf, &lnf, &model.lnf_g, &mut grads.lnf_g, &mut grads.lnf_b);
    for l in (0..model.blocks.len()).rev() {
        dx = block_backward(&model.blocks[l], &caches[l], &dx, cfg.heads, &mut grads.blocks[l]);
    }
    for (t, &tok) in tokens.iter().enumerate() {
        axpy(1.0, dx.row(t), grads.tok_emb.row_mut(tok as usize));
        axpy(1.0, dx.row(t), grads.pos_emb.row_mut(t));
    }
    (nll, count, grads)
}

/// Mean next-token cross-entropy over non-PAD targets of `batch`, and its
/// gradient with respect to every parameter.
pub fn loss_and_grads(model: &TinyLm, batch: &[Vec<TokenId>]) -> Result<(f64, TinyLm)> {
    require(!batch.is_empty(), || "empty batch".into())?;
    for s in batch {
        require(s.len() >= 2, || "sequence shorter than 2 tokens".into())?;
        require(s.len() <= model.config.context_len, || "sequence exceeds context_len".into())?;
        require(
            s.iter().all(|&t| (t as usize) < model.config.vocab_size),
            || "token id outside vocabulary".into(),
        )?;
    }
    let parts: Vec<(f64, usize, TinyLm)> = batch
        .par_iter()
        .map(|s| sequence_loss_and_grads(model, s))
        .collect();
    let mut total_nll = 0.0;
    let mut total = 0usize;
    let mut grads = model.zeros_like();
    for (nll, count, g) in &parts {
        total_nll += nll;
        total += count;
        for (acc, src) in grads.tensors_mut().into_iter().zip(g.tensors()) {
            axpy(1.0, src.data, acc);
        }
    }
    require(total > 0, || "batch has no scored (non-PAD) targets".into())?;
    let inv = 1.0 / total as f64;
    for t in grads.tensors_mut() {
        for v in t.iter_mut() {
            *v *= inv;
        }
    }
    Ok((total_nll * inv, grads))
}
