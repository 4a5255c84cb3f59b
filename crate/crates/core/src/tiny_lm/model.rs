//! Pre-norm decoder-only transformer with learned positional embeddings,
//! tanh-GELU feed-forward blocks and (by default) a weight-tied output layer.
//!
//! Linear weights are stored `d_out × d_in`, so a projection is `y = x·Wᵀ + b`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tokenizer::{TokenId, VOCAB_SIZE};
use super::LanguageModel;
use crate::error::{require, Result};
use crate::numerics::{axpy, dot, Matrix};

pub const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub ffn_dim: usize,
    pub context_len: usize,
    pub vocab_size: usize,
    #[serde(default = "default_tied")]
    pub tie_embeddings: bool,
}

fn default_tied() -> bool {
    true
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            heads: 4,
            model_dim: 128,
            ffn_dim: 512,
            context_len: 256,
            vocab_size: VOCAB_SIZE,
            tie_embeddings: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        require(self.heads >= 1 && self.model_dim % self.heads == 0, || {
            format!(
                "model_dim {} not divisible by heads {}",
                self.model_dim, self.heads
            )
        })?;
        require(self.context_len >= 2, || "context_len must be >= 2".into())?;
        require(self.vocab_size >= 1 && self.ffn_dim >= 1, || {
            "vocab_size and ffn_dim must be positive".into()
        })
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }
}

/// The linear projections inside a block, in true-sequential order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Query,
    Key,
    Value,
    AttnOut,
    FfnIn,
    FfnOut,
}

impl Projection {
    pub const ALL: [Projection; 6] = [
        Projection::Query,
        Projection::Key,
        Projection::Value,
        Projection::AttnOut,
        Projection::FfnIn,
        Projection::FfnOut,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Projection::Query => "attn.q",
            Projection::Key => "attn.k",
            Projection::Value => "attn.v",
            Projection::AttnOut => "attn.out",
            Projection::FfnIn => "ffn.in",
            Projection::FfnOut => "ffn.out",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub ln1_g: Vec<f64>,
    pub ln1_b: Vec<f64>,
    pub wq: Matrix,
    pub bq: Vec<f64>,
    pub wk: Matrix,
    pub bk: Vec<f64>,
    pub wv: Matrix,
    pub bv: Vec<f64>,
    pub wo: Matrix,
    pub bo: Vec<f64>,
    pub ln2_g: Vec<f64>,
    pub ln2_b: Vec<f64>,
    pub w_in: Matrix,
    pub b_in: Vec<f64>,
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
}

impl Block {
    fn zeros(cfg: &ModelConfig) -> Self {
        let (d, f) = (cfg.model_dim, cfg.ffn_dim);
        Self {
            ln1_g: vec![0.0; d],
            ln1_b: vec![0.0; d],
            wq: Matrix::zeros(d, d),
            bq: vec![0.0; d],
            wk: Matrix::zeros(d, d),
            bk: vec![0.0; d],
            wv: Matrix::zeros(d, d),
            bv: vec![0.0; d],
            wo: Matrix::zeros(d, d),
            bo: vec![0.0; d],
            ln2_g: vec![0.0; d],
            ln2_b: vec![0.0; d],
            w_in: Matrix::zeros(f, d),
            b_in: vec![0.0; f],
            w_out: Matrix::zeros(d, f),
            b_out: vec![0.0; d],
        }
    }

    pub fn weight(&self, p: Projection) -> &Matrix {
        match p {
            Projection::Query => &self.wq,
            Projection::Key => &self.wk,
            Projection::Value => &self.wv,
            Projection::AttnOut => &self.wo,
            Projection::FfnIn => &self.w_in,
            Projection::FfnOut => &self.w_out,
        }
    }

    pub fn weight_mut(&mut self, p: Projection) -> &mut Matrix {
        match p {
            Projection::Query => &mut self.wq,
            Projection::Key => &mut self.wk,
            Projection::Value => &mut self.wv,
            Projection::AttnOut => &mut self.wo,
            Projection::FfnIn => &mut self.w_in,
            Projection::FfnOut => &mut self.w_out,
        }
    }
}

/// A tiny decoder-only language model. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyLm {
    pub config: ModelConfig,
    pub tok_emb: Matrix,
    pub pos_emb: Matrix,
    pub blocks: Vec<Block>,
    pub lnf_g: Vec<f64>,
    pub lnf_b: Vec<f64>,
    /// Present only when embeddings are untied.
    pub out_proj: Option<Matrix>,
}

/// Borrowed view of one named tensor.
pub struct TensorView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

impl TinyLm {
    /// Model with every parameter zero (gain vectors included).
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.model_dim;
        Ok(Self {
            config,
            tok_emb: Matrix::zeros(config.vocab_size, d),
            pos_emb: Matrix::zeros(config.context_len, d),
            blocks: (0..config.layers).map(|_| Block::zeros(&config)).collect(),
            lnf_g: vec![0.0; d],
            lnf_b: vec![0.0; d],
            out_proj: (!config.tie_embeddings).then(|| Matrix::zeros(config.vocab_size, d)),
        })
    }

    /// GPT-2 style initialisation: N(0, 0.02) weights, residual projections
    /// scaled by 1/sqrt(2·layers), unit layer-norm gains, zero biases.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        let resid = 0.02 / ((2 * config.layers.max(1)) as f64).sqrt();
        let resid_normal = Normal::new(0.0, resid).expect("valid std");
        let mut fill = |m: &mut Matrix, dist: &Normal<f64>| {
            for v in m.as_mut_slice() {
                *v = dist.sample(&mut rng);
            }
        };
        fill(&mut m.tok_emb, &normal);
        fill(&mut m.pos_emb, &normal);
        for b in &mut m.blocks {
            fill(&mut b.wq, &normal);
            fill(&mut b.wk, &normal);
            fill(&mut b.wv, &normal);
            fill(&mut b.wo, &resid_normal);
            fill(&mut b.w_in, &normal);
            fill(&mut b.w_out, &resid_normal);
            b.ln1_g.fill(1.0);
            b.ln2_g.fill(1.0);
        }
        if let Some(p) = m.out_proj.as_mut() {
            fill(p, &normal);
        }
        m.lnf_g.fill(1.0);
        Ok(m)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config).expect("config already validated")
    }

    /// The matrix that maps final hidden states to logits.
    pub fn output_matrix(&self) -> &Matrix {
        self.out_proj.as_ref().unwrap_or(&self.tok_emb)
    }

    /// All tensors in canonical order.
    pub fn tensors(&self) -> Vec<TensorView<'_>> {
        fn mat<'a>(name: String, m: &'a Matrix, out: &mut Vec<TensorView<'a>>) {
            out.push(TensorView {
                name,
                shape: vec![m.rows(), m.cols()],
                data: m.as_slice(),
            })
        }
        fn vec_view<'a>(name: String, v: &'a [f64]) -> TensorView<'a> {
            TensorView {
                name,
                shape: vec![v.len()],
                data: v,
            }
        }
        let mut out = Vec::new();
        mat("tok_emb".into(), &self.tok_emb, &mut out);
        mat("pos_emb".into(), &self.pos_emb, &mut out);
        for (l, b) in self.blocks.iter().enumerate() {
            let p = |s: &str| format!("blocks.{l}.{s}");
            out.push(vec_view(p("ln1.g"), &b.ln1_g));
            out.push(vec_view(p("ln1.b"), &b.ln1_b));
            mat(p("attn.q.w"), &b.wq, &mut out);
            out.push(vec_view(p("attn.q.b"), &b.bq));
            mat(p("attn.k.w"), &b.wk, &mut out);
            out.push(vec_view(p("attn.k.b"), &b.bk));
            mat(p("attn.v.w"), &b.wv, &mut out);
            out.push(vec_view(p("attn.v.b"), &b.bv));
            mat(p("attn.out.w"), &b.wo, &mut out);
            out.push(vec_view(p("attn.out.b"), &b.bo));
            out.push(vec_view(p("ln2.g"), &b.ln2_g));
            out.push(vec_view(p("ln2.b"), &b.ln2_b));
            mat(p("ffn.in.w"), &b.w_in, &mut out);
            out.push(vec_view(p("ffn.in.b"), &b.b_in));
            mat(p("ffn.out.w"), &b.w_out, &mut out);
            out.push(vec_view(p("ffn.out.b"), &b.b_out));
        }
        out.push(vec_view("lnf.g".into(), &self.lnf_g));
        out.push(vec_view("lnf.b".into(), &self.lnf_b));
        if let Some(p) = &self.out_proj {
            mat("out_proj".into(), p, &mut out);
        }
        out
    }

    /// Mutable slices in the same order as [`TinyLm::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.tok_emb.as_mut_slice(), self.pos_emb.as_mut_slice()];
        for b in &mut self.blocks {
            out.push(&mut b.ln1_g);
            out.push(&mut b.ln1_b);
            out.push(b.wq.as_mut_slice());
            out.push(&mut b.bq);
            out.push(b.wk.as_mut_slice());
            out.push(&mut b.bk);
            out.push(b.wv.as_mut_slice());
            out.push(&mut b.bv);
            out.push(b.wo.as_mut_slice());
            out.push(&mut b.bo);
            out.push(&mut b.ln2_g);
            out.push(&mut b.ln2_b);
            out.push(b.w_in.as_mut_slice());
            out.push(&mut b.b_in);
            out.push(b.w_out.as_mut_slice());
            out.push(&mut b.b_out);
        }
        out.push(&mut self.lnf_g);
        out.push(&mut self.lnf_b);
        if let Some(p) = self.out_proj.as_mut() {
            out.push(p.as_mut_slice());
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Rounds every parameter to the nearest `f32`, the checkpoint precision.
    pub fn snap_to_f32(&mut self) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    fn check_context(&self, tokens: &[TokenId]) -> Result<()> {
        require(!tokens.is_empty(), || "empty context".into())?;
        require(tokens.len() <= self.config.context_len, || {
            format!(
                "context of {} tokens exceeds context_len {}",
                tokens.len(),
                self.config.context_len
            )
        })?;
        require(
            tokens.iter().all(|&t| (t as usize) < self.config.vocab_size),
            || "token id outside vocabulary".into(),
        )
    }

    /// Token plus positional embeddings, `T × D`.
    pub fn embed(&self, tokens: &[TokenId]) -> Matrix {
        let d = self.config.model_dim;
        let mut x = Matrix::zeros(tokens.len(), d);
        for (t, &tok) in tokens.iter().enumerate() {
            let e = self.tok_emb.row(tok as usize);
            let p = self.pos_emb.row(t);
            for ((o, a), b) in x.row_mut(t).iter_mut().zip(e).zip(p) {
                *o = a + b;
            }
        }
        x
    }

    /// Final hidden states (after the last layer norm), `T × D`.
    pub fn hidden_states(&self, tokens: &[TokenId]) -> Result<Matrix> {
        self.check_context(tokens)?;
        let mut x = self.embed(tokens);
        for b in &self.blocks {
            x = block_forward(b, &x, self.config.heads);
        }
        Ok(layer_norm(&x, &self.lnf_g, &self.lnf_b))
    }

    /// Logits for the position following `context`.
    pub fn forward_logits(&self, context: &[TokenId]) -> Result<Vec<f64>> {
        let h = self.hidden_states(context)?;
        Ok(self.logits_row(h.row(h.rows() - 1)))
    }

    /// Logits at every position, `T × V`; row `t` predicts token `t + 1`.
    pub fn forward_sequence(&self, tokens: &[TokenId]) -> Result<Matrix> {
        let h = self.hidden_states(tokens)?;
        let v = self.config.vocab_size;
        let mut out = Matrix::zeros(h.rows(), v);
        for t in 0..h.rows() {
            out.row_mut(t).copy_from_slice(&self.logits_row(h.row(t)));
        }
        Ok(out)
    }

    pub fn logits_row(&self, hidden: &[f64]) -> Vec<f64> {
        let w = self.output_matrix();
        (0..w.rows()).map(|v| dot(hidden, w.row(v))).collect()
    }
}

/// Incremental decoding state: per-layer key/value caches.
#[derive(Debug, Clone)]
pub struct DecodeState {
    pos: usize,
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

impl DecodeState {
    pub fn position(&self) -> usize {
        self.pos
    }
}

impl LanguageModel for TinyLm {
    type State = DecodeState;

    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn context_len(&self) -> usize {
        self.config.context_len
    }

    fn begin(&self) -> DecodeState {
        DecodeState {
            pos: 0,
            keys: vec![Vec::new(); self.blocks.len()],
            values: vec![Vec::new(); self.blocks.len()],
        }
    }

    /// Feeds one token and returns the logits for the next position.
    /// Produces bit-identical values to [`TinyLm::forward_logits`] on the
    /// full prefix.
    fn step(&self, st: &mut DecodeState, token: TokenId) -> Result<Vec<f64>> {
        let cfg = &self.config;
        require(st.pos < cfg.context_len, || "decode past context_len".into())?;
        require((token as usize) < cfg.vocab_size, || "token id outside vocabulary".into())?;
        let d = cfg.model_dim;
        let mut x: Vec<f64> = self
            .tok_emb
            .row(token as usize)
            .iter()
            .zip(self.pos_emb.row(st.pos))
            .map(|(a, b)| a + b)
            .collect();
        let n = st.pos + 1;
        let mut h = vec![0.0; d];
        let mut q = vec![0.0; d];
        let mut k = vec![0.0; d];
        let mut v = vec![0.0; d];
        let mut a = vec![0.0; d];
        let mut o = vec![0.0; d];
        for (l, b) in self.blocks.iter().enumerate() {
            layer_norm_row(&x, &b.ln1_g, &b.ln1_b, &mut h);
            linear_row(&h, &b.wq, &b.bq, &mut q);
            linear_row(&h, &b.wk, &b.bk, &mut k);
            linear_row(&h, &b.wv, &b.bv, &mut v);
            st.keys[l].extend_from_slice(&k);
            st.values[l].extend_from_slice(&v);
            attend_row(&q, &st.keys[l], &st.values[l], n, cfg.heads, &mut a, None);
            linear_row(&a, &b.wo, &b.bo, &mut o);
            for (xi, oi) in x.iter_mut().zip(&o) {
                *xi += oi;
            }
            layer_norm_row(&x, &b.ln2_g, &b.ln2_b, &mut h);
            let mut f = vec![0.0; cfg.ffn_dim];
            linear_row(&h, &b.w_in, &b.b_in, &mut f);
            for fi in &mut f {
                *fi = gelu(*fi);
            }
            linear_row(&f, &b.w_out, &b.b_out, &mut o);
            for (xi, oi) in x.iter_mut().zip(&o) {
                *xi += oi;
            }
        }
        layer_norm_row(&x, &self.lnf_g, &self.lnf_b, &mut h);
        st.pos += 1;
        Ok(self.logits_row(&h))
    }
}

// ---------------------------------------------------------------------------
// Row-level building blocks. The full-sequence and incremental paths share
// these so that they agree bit for bit.

#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    let th = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Returns the reciprocal standard deviation used.
#[inline]
pub fn layer_norm_row(x: &[f64], g: &[f64], b: &[f64], out: &mut [f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let rstd = 1.0 / (var + LN_EPS).sqrt();
    for i in 0..x.len() {
        out[i] = (x[i] - mean) * rstd * g[i] + b[i];
    }
    rstd
}

pub fn layer_norm(x: &Matrix, g: &[f64], b: &[f64]) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for t in 0..x.rows() {
        layer_norm_row(x.row(t), g, b, out.row_mut(t));
    }
    out
}

#[inline]
pub fn linear_row(x: &[f64], w: &Matrix, b: &[f64], out: &mut [f64]) {
    for (o, (wr, bi)) in out.iter_mut().zip((0..w.rows()).map(|r| w.row(r)).zip(b)) {
        *o = dot(x, wr) + bi;
    }
}

/// `x·Wᵀ + b` row by row.
pub fn linear(x: &Matrix, w: &Matrix, b: &[f64]) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), w.rows());
    for t in 0..x.rows() {
        linear_row(x.row(t), w, b, out.row_mut(t));
    }
    out
}

/// Causal attention for one query against the first `n` cached rows of
/// `keys`/`values` (row stride = `q.len()`). When `probs` is given, the
/// per-head attention weights are appended to it.
pub fn attend_row(
    q: &[f64],
    keys: &[f64],
    values: &[f64],
    n: usize,
    heads: usize,
    out: &mut [f64],
    mut probs: Option<&mut Vec<f64>>,
) {
    let d = q.len();
    let hd = d / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut scores = vec![0.0; n];
    out.fill(0.0);
    for h in 0..heads {
        let off = h * hd;
        let qh = &q[off..off + hd];
        let mut max = f64::NEG_INFINITY;
        for (j, s) in scores.iter_mut().enumerate() {
            *s = dot(qh, &keys[j * d + off..j * d + off + hd]) * scale;
            max = max.max(*s);
        }
        let mut sum = 0.0;
        for s in scores.iter_mut() {
            *s = (*s - max).exp();
            sum += *s;
        }
        let oh = &mut out[off..off + hd];
        for (j, s) in scores.iter_mut().enumerate() {
            *s /= sum;
            axpy(*s, &values[j * d + off..j * d + off + hd], oh);
        }
        if let Some(p) = probs.as_deref_mut() {
            p.extend_from_slice(&scores);
        }
    }
}

/// Causal multi-head attention over a whole sequence.
pub fn attention(q: &Matrix, k: &Matrix, v: &Matrix, heads: usize) -> Matrix {
    let mut out = Matrix::zeros(q.rows(), q.cols());
    for t in 0..q.rows() {
        attend_row(
            q.row(t),
            k.as_slice(),
            v.as_slice(),
            t + 1,
            heads,
            out.row_mut(t),
            None,
        );
    }
    out
}

pub fn add_in_place(x: &mut Matrix, y: &Matrix) {
    for (a, b) in x.as_mut_slice().iter_mut().zip(y.as_slice()) {
        *a += b;
    }
}

pub fn gelu_matrix(x: &Matrix) -> Matrix {
    let mut g = x.clone();
    for v in g.as_mut_slice() {
        *v = gelu(*v);
    }
    g
}

/// One transformer block applied to a whole sequence.
pub fn block_forward(b: &Block, x: &Matrix, heads: usize) -> Matrix {
    let h = layer_norm(x, &b.ln1_g, &b.ln1_b);
    let q = linear(&h, &b.wq, &b.bq);
    let k = linear(&h, &b.wk, &b.bk);
    let v = linear(&h, &b.wv, &b.bv);
    let a = attention(&q, &k, &v, heads);
    let mut x = x.clone();
    add_in_place(&mut x, &linear(&a, &b.wo, &b.bo));
    let h2 = layer_norm(&x, &b.ln2_g, &b.ln2_b);
    let g = gelu_matrix(&linear(&h2, &b.w_in, &b.b_in));
    add_in_place(&mut x, &linear(&g, &b.w_out, &b.b_out));
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiny_lm::BOS;

    fn small(tied: bool) -> ModelConfig {
        ModelConfig {
            layers: 1,
            heads: 2,
            model_dim: 8,
            ffn_dim: 16,
            context_len: 12,
            vocab_size: VOCAB_SIZE,
            tie_embeddings: tied,
        }
    }

    #[test]
    fn gelu_reference_values() {
        assert_eq!(gelu(0.0), 0.0);
        // tanh approximation at 1 and -1.
        assert!((gelu(1.0) - 0.841_191_990_608_276_8).abs() < 1e-15);
        assert!((gelu(-1.0) + 0.158_808_009_391_723_24).abs() < 1e-15);
        let h = 1e-6;
        for x in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((gelu_grad(x) - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_standardises() {
        let x = [1.0, 2.0, 3.0, 6.0];
        let mut out = [0.0; 4];
        layer_norm_row(&x, &[1.0; 4], &[0.0; 4], &mut out);
        let mean: f64 = out.iter().sum::<f64>() / 4.0;
        let var: f64 = out.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-15);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig { heads: 3, ..small(true) }.validate().is_err());
        assert!(ModelConfig { context_len: 0, ..small(true) }.validate().is_err());
        assert!(small(true).validate().is_ok());
    }

    #[test]
    fn parameter_count_and_tensor_order() {
        let m = TinyLm::init(small(false), 0).unwrap();
        let counted: usize = m.tensors().iter().map(|t| t.data.len()).sum();
        assert_eq!(m.num_parameters(), counted);
        let names: Vec<String> = m.tensors().into_iter().map(|t| t.name).collect();
        assert_eq!(names.first().map(String::as_str), Some("tok_emb"));
        assert_eq!(names.last().map(String::as_str), Some("out_proj"));
        let tied = TinyLm::init(small(true), 0).unwrap();
        assert_eq!(m.num_parameters() - tied.num_parameters(), VOCAB_SIZE * 8);
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = TinyLm::zeros(small(true)).unwrap();
        let logits = m.forward_logits(&[BOS, 1, 2]).unwrap();
        assert!(logits.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn context_limit_enforced() {
        let m = TinyLm::init(small(true), 1).unwrap();
        assert!(m.forward_logits(&[1; 13]).is_err());
        assert!(m.forward_logits(&[]).is_err());
        assert!(m.forward_logits(&[VOCAB_SIZE as TokenId]).is_err());
        let mut st = m.begin();
        for _ in 0..12 {
            m.step(&mut st, 5).unwrap();
        }
        assert!(m.step(&mut st, 5).is_err());
    }

    #[test]
    fn snapping_is_idempotent() {
        let mut m = TinyLm::init(small(true), 2).unwrap();
        m.snap_to_f32();
        let once = m.clone();
        m.snap_to_f32();
        assert_eq!(once.tok_emb, m.tok_emb);
        assert!(m.tok_emb.as_slice().iter().all(|&v| v as f32 as f64 == v));
    }
}
