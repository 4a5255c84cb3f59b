//! Shared machinery of the second-order methods: dampened inverse-Hessian
//! factors and the column sweep with error feedback.

use crate::error::{Error, Result};
use crate::numerics::{cholesky, inverse_from_cholesky, Matrix};

/// Sets zero diagonal entries of `h` to one. Returns the number of such columns.
pub fn fix_dead_columns(h: &mut Matrix) -> usize {
    let mut dead = 0;
    for j in 0..h.rows() {
        if h.get(j, j) == 0.0 {
            h.set(j, j, 1.0);
            dead += 1;
        }
    }
    dead
}

/// Upper Cholesky factor `U` of `(H + λI)⁻¹` with `λ = damp · mean(diag H)`.
/// On failure the dampening grows tenfold, at most `retries` times.
pub fn inverse_hessian_factor(h: &Matrix, damp: f64, retries: usize) -> Result<Matrix> {
    let n = h.rows();
    let mean_diag = h.diag().iter().sum::<f64>() / n.max(1) as f64;
    let mut damp = damp;
    let mut last = None;
    for _ in 0..=retries {
        let lambda = damp * mean_diag;
        let mut hd = h.clone();
        for j in 0..n {
            hd.set(j, j, hd.get(j, j) + lambda);
        }
        let attempt = cholesky(&hd)
            .and_then(|l| inverse_from_cholesky(&l))
            .and_then(|inv| cholesky(&inv));
        match attempt {
            Ok(l) => return Ok(l.transpose()),
            Err(e @ (Error::NotPositiveDefinite { .. } | Error::Singular(_))) => {
                last = Some(e);
                damp = if damp == 0.0 { 1e-6 } else { damp * 10.0 };
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Walks the columns of one weight row left to right. For each column,
/// `target(row, col)` picks the replacement value given the current row;
/// the induced error is spread over the remaining columns through `u`.
/// Updates beyond the current block of `block` columns are applied lazily.
pub fn sweep_row(
    row: &mut [f64],
    u: &Matrix,
    block: usize,
    mut target: impl FnMut(&[f64], usize) -> f64,
) {
    let cols = row.len();
    let mut err = vec![0.0; block];
    let mut i1 = 0;
    while i1 < cols {
        let i2 = (i1 + block).min(cols);
        for col in i1..i2 {
            let q = target(row, col);
            let urow = u.row(col);
            let e = (row[col] - q) / urow[col];
            err[col - i1] = e;
            row[col] = q;
            if e != 0.0 {
                for c in col + 1..i2 {
                    row[c] -= e * urow[c];
                }
            }
        }
        for c in i2..cols {
            let mut s = 0.0;
            for i in i1..i2 {
                s += err[i - i1] * u.get(i, c);
            }
            row[c] -= s;
        }
        i1 = i2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{matmul, spd_inverse};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_vec(3 * n, n, (0..3 * n * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        matmul(&x.transpose(), &x).unwrap()
    }

    #[test]
    fn factor_reconstructs_inverse() {
        let h = random_spd(9, 4);
        let u = inverse_hessian_factor(&h, 0.0, 0).unwrap();
        let inv = spd_inverse(&h).unwrap();
        let utu = matmul(&u.transpose(), &u).unwrap();
        for (a, b) in utu.as_slice().iter().zip(inv.as_slice()) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
        for i in 0..9 {
            for j in 0..i {
                assert_eq!(u.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn singular_hessian_recovers_with_dampening() {
        // Rank one: x xᵀ.
        let x = [1.0, 2.0, -1.0, 0.5];
        let h = Matrix::from_vec(4, 4, (0..16).map(|k| x[k / 4] * x[k % 4]).collect()).unwrap();
        assert!(inverse_hessian_factor(&h, 0.0, 0).is_err());
        assert!(inverse_hessian_factor(&h, 0.01, 3).is_ok());
    }

    #[test]
    fn dead_columns_get_unit_diagonal() {
        let mut h = Matrix::from_diag(&[2.0, 0.0, 3.0]);
        assert_eq!(fix_dead_columns(&mut h), 1);
        assert_eq!(h.diag(), vec![2.0, 1.0, 3.0]);
    }

    #[test]
    fn lazy_blocks_match_eager_sweep() {
        let h = random_spd(12, 5);
        let u = inverse_hessian_factor(&h, 0.01, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let row: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let round = |r: &[f64], c: usize| (r[c] * 4.0).round() / 4.0;
        let mut eager = row.clone();
        sweep_row(&mut eager, &u, 12, round);
        for block in [1, 3, 4, 5] {
            let mut lazy = row.clone();
            sweep_row(&mut lazy, &u, block, round);
            for (a, b) in lazy.iter().zip(&eager) {
                assert!((a - b).abs() < 1e-12, "block {block}");
            }
        }
    }
}
