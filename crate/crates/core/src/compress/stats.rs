use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{require, Result};
use crate::numerics::{axpy, Matrix};

/// Input statistics of one linear layer over all calibration tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCalibStats {
    pub layer: String,
    /// `Σ x xᵀ` over tokens (undampened).
    pub hessian: Matrix,
    /// `‖X_j‖₂` per input feature.
    pub col_norms: Vec<f64>,
    /// `mean |x_j|` per input feature.
    pub mean_abs: Vec<f64>,
    pub token_count: usize,
}

/// Inputs are folded in fixed-size chunks so the summation order does not
/// depend on the number of threads.
const CHUNK: usize = 8;

struct Partial {
    upper: Matrix,
    abs_sum: Vec<f64>,
    tokens: usize,
}

fn accumulate_chunk(inputs: &[Matrix], d: usize) -> Partial {
    let mut p = Partial {
        upper: Matrix::zeros(d, d),
        abs_sum: vec![0.0; d],
        tokens: 0,
    };
    for x in inputs {
        for t in 0..x.rows() {
            let row = x.row(t);
            for i in 0..d {
                let xi = row[i];
                if xi != 0.0 {
                    axpy(xi, &row[i..], &mut p.upper.row_mut(i)[i..]);
                }
                p.abs_sum[i] += xi.abs();
            }
            p.tokens += 1;
        }
    }
    p
}

/// Accumulates statistics from per-sequence input matrices (`tokens × d_in`).
pub fn collect_stats(layer: impl Into<String>, inputs: &[Matrix]) -> Result<LayerCalibStats> {
    require(!inputs.is_empty(), || "no calibration inputs".into())?;
    let d = inputs[0].cols();
    require(inputs.iter().all(|x| x.cols() == d), || "inconsistent input widths".into())?;
    let partials: Vec<Partial> = inputs
        .par_chunks(CHUNK)
        .map(|c| accumulate_chunk(c, d))
        .collect();
    let mut upper = Matrix::zeros(d, d);
    let mut abs_sum = vec![0.0; d];
    let mut tokens = 0;
    for p in &partials {
        axpy(1.0, p.upper.as_slice(), upper.as_mut_slice());
        axpy(1.0, &p.abs_sum, &mut abs_sum);
        tokens += p.tokens;
    }
    require(tokens > 0, || "calibration inputs contain no tokens".into())?;
    let mut hessian = upper;
    for i in 0..d {
        for j in 0..i {
            let v = hessian.get(j, i);
            hessian.set(i, j, v);
        }
    }
    let col_norms = hessian.diag().iter().map(|v| v.sqrt()).collect();
    let mean_abs = abs_sum.iter().map(|s| s / tokens as f64).collect();
    Ok(LayerCalibStats {
        layer: layer.into(),
        hessian,
        col_norms,
        mean_abs,
        token_count: tokens,
    })
}

/// `‖X Wᵀ − X Ŵᵀ‖_F² = Σ_rows δ H δᵀ` with `δ = W − Ŵ` and undampened `H`.
pub fn reconstruction_error(w: &Matrix, w_hat: &Matrix, hessian: &Matrix) -> f64 {
    let d = w.cols();
    let mut total = 0.0;
    let mut delta = vec![0.0; d];
    for r in 0..w.rows() {
        for ((o, a), b) in delta.iter_mut().zip(w.row(r)).zip(w_hat.row(r)) {
            *o = a - b;
        }
        for i in 0..d {
            if delta[i] != 0.0 {
                total += delta[i] * crate::numerics::dot(hessian.row(i), &delta);
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::matmul_bt;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_inputs(rng: &mut ChaCha8Rng, n: usize, t: usize, d: usize) -> Vec<Matrix> {
        (0..n)
            .map(|_| Matrix::from_vec(t, d, (0..t * d).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap())
            .collect()
    }

    #[test]
    fn hessian_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs = random_inputs(&mut rng, 11, 5, 6);
        let s = collect_stats("l", &xs).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let mut want = 0.0;
                for x in &xs {
                    for t in 0..x.rows() {
                        want += x.get(t, i) * x.get(t, j);
                    }
                }
                assert!((s.hessian.get(i, j) - want).abs() < 1e-9);
            }
            assert!((s.col_norms[i].powi(2) - s.hessian.get(i, i)).abs() <= 1e-6 * s.hessian.get(i, i));
        }
        assert_eq!(s.token_count, 55);
    }

    #[test]
    fn duplicated_examples_scale_linearly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let one = random_inputs(&mut rng, 1, 7, 4);
        let many: Vec<Matrix> = (0..20).map(|_| one[0].clone()).collect();
        let a = collect_stats("l", &one).unwrap();
        let b = collect_stats("l", &many).unwrap();
        for (x, y) in a.hessian.as_slice().iter().zip(b.hessian.as_slice()) {
            assert!((20.0 * x - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
        assert_eq!(a.mean_abs.len(), 4);
        for (x, y) in a.mean_abs.iter().zip(&b.mean_abs) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn error_equals_output_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs = random_inputs(&mut rng, 3, 9, 5);
        let s = collect_stats("l", &xs).unwrap();
        let w = random_inputs(&mut rng, 1, 4, 5).remove(0);
        let w_hat = random_inputs(&mut rng, 1, 4, 5).remove(0);
        let mut want = 0.0;
        for x in &xs {
            let diff = matmul_bt(x, &w).unwrap().sub(&matmul_bt(x, &w_hat).unwrap()).unwrap();
            want += diff.frobenius_norm().powi(2);
        }
        let got = reconstruction_error(&w, &w_hat, &s.hessian);
        assert!((got - want).abs() < 1e-9 * want);
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(collect_stats("l", &[]).is_err());
    }
}
