use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CompressionConfig, Method};
use super::methods::{aws_quantize, gptq_quantize, sparsegpt_prune, wanda_prune};
use super::quant::{rtn_quantize, QuantizedLayer};
use super::stats::{collect_stats, reconstruction_error, LayerCalibStats};
use crate::calibration::{CalibrationSet, CalibrationSpec};
use crate::error::{require, Error, Result};
use crate::numerics::Matrix;
use crate::tiny_lm::model::{attention, gelu_matrix, layer_norm, linear, Block};
use crate::tiny_lm::{Projection, TinyLm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: String,
    pub method: Method,
    /// `‖X Wᵀ − X Ŵᵀ‖_F²` over the calibration inputs of the layer.
    pub recon_error: f64,
    /// Fraction of exactly-zero weights after compression.
    pub sparsity: f64,
    pub bits: Option<u32>,
    /// Exponent picked by `aws`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub config: CompressionConfig,
    pub calibration: CalibrationSpec,
    pub calibration_tokens: usize,
    pub layers: Vec<LayerReport>,
    /// Zero fraction over all compressed weight matrices.
    pub overall_sparsity: f64,
}

impl CompressionReport {
    /// One row per layer: `layer,method,recon_error,sparsity,bits`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Contract(format!("{other:?}")),
        })?;
        w.write_record(["layer", "method", "recon_error", "sparsity", "bits"])?;
        for l in &self.layers {
            w.write_record([
                l.layer.clone(),
                l.method.to_string(),
                format!("{:.10e}", l.recon_error),
                format!("{:.6}", l.sparsity),
                l.bits.map_or_else(String::new, |b| b.to_string()),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct CompressionOutcome {
    pub model: TinyLm,
    pub report: CompressionReport,
    /// Grid metadata of every quantized layer, keyed by layer name.
    pub quantized: BTreeMap<String, QuantizedLayer>,
    /// Wall-clock seconds per layer; kept out of the report so that it is
    /// reproducible byte for byte.
    pub layer_seconds: Vec<(String, f64)>,
}

pub fn layer_name(layer: usize, p: Projection) -> String {
    format!("blocks.{layer}.{}", p.name())
}

fn zero_fraction(w: &Matrix) -> f64 {
    w.as_slice().iter().filter(|v| **v == 0.0).count() as f64 / w.as_slice().len().max(1) as f64
}

/// Fraction of zeros over every linear weight inside the blocks.
pub fn block_weight_sparsity(model: &TinyLm) -> f64 {
    let (mut zeros, mut total) = (0usize, 0usize);
    for b in &model.blocks {
        for p in Projection::ALL {
            let w = b.weight(p).as_slice();
            zeros += w.iter().filter(|v| **v == 0.0).count();
            total += w.len();
        }
    }
    zeros as f64 / total.max(1) as f64
}

/// True when every run of `m` inputs in every row of `w` has at least `n` zeros.
pub fn satisfies_n_m(w: &Matrix, n: usize, m: usize) -> bool {
    w.cols() % m == 0
        && (0..w.rows()).all(|r| {
            w.row(r)
                .chunks(m)
                .all(|g| g.iter().filter(|v| **v == 0.0).count() >= n)
        })
}

struct Compressed {
    weight: Matrix,
    quantized: Option<QuantizedLayer>,
    alpha: Option<f64>,
}

fn compress_weight(w: &Matrix, stats: &LayerCalibStats, cfg: &CompressionConfig) -> Result<Compressed> {
    let plain = |weight| Compressed {
        weight,
        quantized: None,
        alpha: None,
    };
    Ok(match cfg.method {
        Method::Wanda => plain(wanda_prune(w, &stats.col_norms, cfg.prune_n, cfg.prune_m)?),
        Method::Sparsegpt => plain(sparsegpt_prune(w, &stats.hessian, cfg)?),
        Method::Gptq => {
            let q = gptq_quantize(w, &stats.hessian, cfg)?;
            Compressed {
                weight: q.weights.clone(),
                quantized: Some(q),
                alpha: None,
            }
        }
        Method::Rtn => {
            let q = rtn_quantize(w, cfg.bits, cfg.group_size());
            Compressed {
                weight: q.weights.clone(),
                quantized: Some(q),
                alpha: None,
            }
        }
        Method::Aws => {
            let (q, alpha) = aws_quantize(w, stats, cfg)?;
            Compressed {
                weight: q.weights.clone(),
                quantized: Some(q),
                alpha: Some(alpha),
            }
        }
    })
}

/// Calibration examples cut into windows the model can attend over.
fn windows(model: &TinyLm, calib: &CalibrationSet) -> Vec<Vec<crate::tiny_lm::TokenId>> {
    let ctx = model.config.context_len;
    calib
        .examples
        .iter()
        .flat_map(|e| e.chunks(ctx).map(<[_]>::to_vec))
        .collect()
}

struct Pass<'a> {
    cfg: &'a CompressionConfig,
    out: CompressionOutcome,
}

impl Pass<'_> {
    fn run(&mut self, layer: usize, projs: &[Projection], inputs: &[Matrix]) -> Result<()> {
        let stats = collect_stats(layer_name(layer, projs[0]), inputs)?;
        for &p in projs {
            let name = layer_name(layer, p);
            let started = Instant::now();
            let w = self.out.model.blocks[layer].weight(p).clone();
            let c = compress_weight(&w, &stats, self.cfg)?;
            require(c.weight.is_finite(), || format!("{name}: compression produced non-finite weights"))?;
            self.out.report.layers.push(LayerReport {
                layer: name.clone(),
                method: self.cfg.method,
                recon_error: reconstruction_error(&w, &c.weight, &stats.hessian),
                sparsity: zero_fraction(&c.weight),
                bits: (!self.cfg.method.is_pruning()).then_some(self.cfg.bits),
                alpha: c.alpha,
            });
            if let Some(q) = c.quantized {
                self.out.quantized.insert(name.clone(), q);
            }
            *self.out.model.blocks[layer].weight_mut(p) = c.weight;
            self.out.layer_seconds.push((name, started.elapsed().as_secs_f64()));
        }
        Ok(())
    }
}

/// Compresses every linear layer of every block. Layers are visited in
/// forward order and, with `true_sequential`, each sub-layer's inputs are
/// produced by the already-compressed sub-layers before it.
pub fn compress_model(model: &TinyLm, calib: &CalibrationSet, cfg: &CompressionConfig) -> Result<CompressionOutcome> {
    cfg.validate()?;
    calib.validate()?;
    require(!calib.is_empty(), || "empty calibration set".into())?;
    let wins = windows(model, calib);
    let heads = model.config.heads;
    let mut pass = Pass {
        cfg,
        out: CompressionOutcome {
            model: model.clone(),
            report: CompressionReport {
                config: cfg.clone(),
                calibration: calib.spec.clone(),
                calibration_tokens: wins.iter().map(Vec::len).sum(),
                layers: Vec::new(),
                overall_sparsity: 0.0,
            },
            quantized: BTreeMap::new(),
            layer_seconds: Vec::new(),
        },
    };
    let mut xs: Vec<Matrix> = wins.par_iter().map(|w| model.embed(w)).collect();
    for l in 0..model.blocks.len() {
        let original = &model.blocks[l];
        let src = |pass: &Pass<'_>| -> Block {
            if cfg.true_sequential {
                pass.out.model.blocks[l].clone()
            } else {
                original.clone()
            }
        };

        let h1: Vec<Matrix> = xs.par_iter().map(|x| layer_norm(x, &original.ln1_g, &original.ln1_b)).collect();
        pass.run(l, &[Projection::Query, Projection::Key, Projection::Value], &h1)?;

        let b = src(&pass);
        let attn: Vec<Matrix> = h1
            .par_iter()
            .map(|h| {
                let q = linear(h, &b.wq, &b.bq);
                let k = linear(h, &b.wk, &b.bk);
                let v = linear(h, &b.wv, &b.bv);
                attention(&q, &k, &v, heads)
            })
            .collect();
        drop(h1);
        pass.run(l, &[Projection::AttnOut], &attn)?;

        let b = src(&pass);
        let mid: Vec<Matrix> = xs
            .par_iter()
            .zip(&attn)
            .map(|(x, a)| {
                let mut x = x.clone();
                crate::tiny_lm::model::add_in_place(&mut x, &linear(a, &b.wo, &b.bo));
                x
            })
            .collect();
        drop(attn);
        let h2: Vec<Matrix> = mid.par_iter().map(|x| layer_norm(x, &original.ln2_g, &original.ln2_b)).collect();
        pass.run(l, &[Projection::FfnIn], &h2)?;

        let b = src(&pass);
        let act: Vec<Matrix> = h2.par_iter().map(|h| gelu_matrix(&linear(h, &b.w_in, &b.b_in))).collect();
        drop(h2);
        pass.run(l, &[Projection::FfnOut], &act)?;
        drop(act);

        // The next layer always sees the output of the compressed layer.
        let done = &pass.out.model.blocks[l];
        xs = mid
            .into_par_iter()
            .zip(xs.par_iter())
            .map(|(m, x)| {
                let mut y = if cfg.true_sequential {
                    m
                } else {
                    let mut y = x.clone();
                    let h = layer_norm(x, &done.ln1_g, &done.ln1_b);
                    let a = attention(
                        &linear(&h, &done.wq, &done.bq),
                        &linear(&h, &done.wk, &done.bk),
                        &linear(&h, &done.wv, &done.bv),
                        heads,
                    );
                    crate::tiny_lm::model::add_in_place(&mut y, &linear(&a, &done.wo, &done.bo));
                    y
                };
                let h = layer_norm(&y, &done.ln2_g, &done.ln2_b);
                let g = gelu_matrix(&linear(&h, &done.w_in, &done.b_in));
                crate::tiny_lm::model::add_in_place(&mut y, &linear(&g, &done.w_out, &done.b_out));
                y
            })
            .collect();
    }
    pass.out.report.overall_sparsity = block_weight_sparsity(&pass.out.model);
    Ok(pass.out)
}
