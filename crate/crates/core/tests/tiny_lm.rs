//! Whole-model checks of the tiny transformer against a naive reference.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selfcal::numerics::Matrix;
use selfcal::tiny_lm::{load_checkpoint, save_checkpoint, LanguageModel, ModelConfig, TinyLm, TokenId, BOS, VOCAB_SIZE};

fn config(layers: usize, tied: bool) -> ModelConfig {
    ModelConfig {
        layers,
        heads: 4,
        model_dim: 16,
        ffn_dim: 24,
        context_len: 20,
        vocab_size: VOCAB_SIZE,
        tie_embeddings: tied,
    }
}

/// Model with larger-than-default random weights so that every component
/// visibly affects the output.
fn random_model(cfg: ModelConfig, seed: u64) -> TinyLm {
    let mut m = TinyLm::init(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
    for t in m.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
    m
}

fn tokens(rng: &mut ChaCha8Rng, n: usize) -> Vec<TokenId> {
    let mut t = vec![BOS];
    t.extend((1..n).map(|_| rng.gen_range(0..256)));
    t
}

// Reference implementation written with plain loops over indices.

fn ref_ln(x: &[f64], g: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    x.iter()
        .enumerate()
        .map(|(i, v)| (v - mean) / (var + 1e-5).sqrt() * g[i] + b[i])
        .collect()
}

fn ref_lin(x: &[f64], w: &Matrix, b: &[f64]) -> Vec<f64> {
    (0..w.rows())
        .map(|o| (0..w.cols()).map(|i| w.get(o, i) * x[i]).sum::<f64>() + b[o])
        .collect()
}

fn ref_gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

fn reference_logits(m: &TinyLm, toks: &[TokenId]) -> Vec<Vec<f64>> {
    let cfg = &m.config;
    let (d, heads) = (cfg.model_dim, cfg.heads);
    let hd = d / heads;
    let mut xs: Vec<Vec<f64>> = toks
        .iter()
        .enumerate()
        .map(|(t, &tok)| (0..d).map(|i| m.tok_emb.get(tok as usize, i) + m.pos_emb.get(t, i)).collect())
        .collect();
    for b in &m.blocks {
        let h: Vec<Vec<f64>> = xs.iter().map(|x| ref_ln(x, &b.ln1_g, &b.ln1_b)).collect();
        let q: Vec<Vec<f64>> = h.iter().map(|x| ref_lin(x, &b.wq, &b.bq)).collect();
        let k: Vec<Vec<f64>> = h.iter().map(|x| ref_lin(x, &b.wk, &b.bk)).collect();
        let v: Vec<Vec<f64>> = h.iter().map(|x| ref_lin(x, &b.wv, &b.bv)).collect();
        for t in 0..xs.len() {
            let mut att = vec![0.0; d];
            for head in 0..heads {
                let r = head * hd..(head + 1) * hd;
                let scores: Vec<f64> = (0..=t)
                    .map(|s| r.clone().map(|i| q[t][i] * k[s][i]).sum::<f64>() / (hd as f64).sqrt())
                    .collect();
                let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = scores.iter().map(|s| (s - mx).exp()).sum();
                for s in 0..=t {
                    let p = (scores[s] - mx).exp() / z;
                    for i in r.clone() {
                        att[i] += p * v[s][i];
                    }
                }
            }
            let o = ref_lin(&att, &b.wo, &b.bo);
            for i in 0..d {
                xs[t][i] += o[i];
            }
        }
        for x in xs.iter_mut() {
            let h2 = ref_ln(x, &b.ln2_g, &b.ln2_b);
            let f: Vec<f64> = ref_lin(&h2, &b.w_in, &b.b_in).into_iter().map(ref_gelu).collect();
            let o = ref_lin(&f, &b.w_out, &b.b_out);
            for i in 0..d {
                x[i] += o[i];
            }
        }
    }
    let out = m.out_proj.as_ref().unwrap_or(&m.tok_emb);
    xs.iter()
        .map(|x| {
            let h = ref_ln(x, &m.lnf_g, &m.lnf_b);
            (0..cfg.vocab_size)
                .map(|vtok| (0..d).map(|i| out.get(vtok, i) * h[i]).sum())
                .collect()
        })
        .collect()
}

#[test]
fn forward_matches_reference_implementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (layers, tied) in [(1, true), (2, false), (3, true)] {
        let m = random_model(config(layers, tied), layers as u64);
        let toks = tokens(&mut rng, 17);
        let got = m.forward_sequence(&toks).unwrap();
        let want = reference_logits(&m, &toks);
        for t in 0..toks.len() {
            for v in 0..VOCAB_SIZE {
                let (a, b) = (got.get(t, v), want[t][v]);
                assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "layers {layers} t {t} v {v}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn incremental_decoding_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m = random_model(config(2, true), 7);
    let toks = tokens(&mut rng, 20);
    let mut st = m.begin();
    for t in 0..toks.len() {
        let step = m.step(&mut st, toks[t]).unwrap();
        let full = m.forward_logits(&toks[..=t]).unwrap();
        assert_eq!(step, full, "position {t}");
    }
}

#[test]
fn attention_is_causal() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = random_model(config(2, false), 9);
    let a = tokens(&mut rng, 15);
    let mut b = a.clone();
    for t in &mut b[9..] {
        *t = (*t + 1) % 256;
    }
    let la = m.forward_sequence(&a).unwrap();
    let lb = m.forward_sequence(&b).unwrap();
    for t in 0..9 {
        assert_eq!(la.row(t), lb.row(t), "position {t} saw the future");
    }
    assert_ne!(la.row(9), lb.row(9));
}

#[test]
fn zero_layer_model_predicts_its_bigram_table() {
    // With no blocks, unit final norm and an untied output matrix that is
    // large on (token, successor) pairs, the argmax is the successor.
    let cfg = ModelConfig {
        layers: 0,
        heads: 1,
        model_dim: 32,
        ffn_dim: 4,
        context_len: 8,
        vocab_size: VOCAB_SIZE,
        tie_embeddings: false,
    };
    let mut m = TinyLm::zeros(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for v in m.tok_emb.as_mut_slice() {
        *v = rng.gen_range(-1.0..1.0);
    }
    m.lnf_g = vec![1.0; 32];
    let succ = |t: usize| (t * 5 + 3) % VOCAB_SIZE;
    let mut out = Matrix::zeros(VOCAB_SIZE, 32);
    for t in 0..VOCAB_SIZE {
        let mut e = m.tok_emb.row(t).to_vec();
        let mut h = vec![0.0; 32];
        selfcal::tiny_lm::model::layer_norm_row(&e.clone(), &m.lnf_g, &m.lnf_b, &mut h);
        e.copy_from_slice(&h);
        for (i, v) in e.iter().enumerate() {
            let cur = out.get(succ(t), i);
            out.set(succ(t), i, cur + 10.0 * v);
        }
    }
    m.out_proj = Some(out);
    for t in [0usize, 5, 97, 200, 255] {
        let logits = m.forward_logits(&[t as TokenId]).unwrap();
        assert_eq!(selfcal::numerics::argmax(&logits), succ(t), "token {t}");
    }
}

#[test]
fn checkpoint_round_trip_preserves_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = random_model(config(2, false), 11);
    m.snap_to_f32();
    let p = dir.path().join("m.tlm");
    save_checkpoint(&m, &p).unwrap();
    let back = load_checkpoint(&p).unwrap();
    let toks = [BOS, 10, 20, 30];
    assert_eq!(m.forward_sequence(&toks).unwrap(), back.forward_sequence(&toks).unwrap());
}
