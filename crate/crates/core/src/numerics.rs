//! Dense 64-bit kernels shared by the model, the trainer and the compressors.
//!
//! Every reduction runs in a fixed order so that results are bit-reproducible
//! across runs and thread counts.

use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        require(data.len() == rows * cols, || {
            format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )
        })?;
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        require(rows.iter().all(|r| r.len() == cols), || {
            "ragged rows".to_string()
        })?;
        let data = rows.iter().flatten().copied().collect();
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        require(self.shape() == other.shape(), || {
            format!("shape mismatch {:?} vs {:?}", self.shape(), other.shape())
        })?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Permutes columns: column `j` of the result is column `perm[j]` of `self`.
    pub fn permute_cols(&self, perm: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let src = self.row(r);
            let dst = out.row_mut(r);
            for (j, &p) in perm.iter().enumerate() {
                dst[j] = src[p];
            }
        }
        out
    }

    /// Symmetric permutation `P·self·Pᵀ` for a square matrix.
    pub fn permute_sym(&self, perm: &[usize]) -> Matrix {
        let n = self.rows;
        let mut out = Matrix::zeros(n, n);
        for (i, &pi) in perm.iter().enumerate() {
            for (j, &pj) in perm.iter().enumerate() {
                out.data[i * n + j] = self.data[pi * n + pj];
            }
        }
        out
    }
}

/// Dot product with eight independent accumulators combined in a fixed tree.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Standard product `a·b`, accumulating over the inner index in increasing order.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    require(a.cols == b.rows, || {
        format!(
            "matmul dimension mismatch: {}x{} · {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )
    })?;
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik != 0.0 {
                axpy(aik, b.row(k), orow);
            }
        }
    }
    Ok(out)
}

/// `a·bᵀ`, each entry a [`dot`] of two rows.
pub fn matmul_bt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    require(a.cols == b.cols, || {
        format!(
            "matmul_bt dimension mismatch: {}x{} · ({}x{})ᵀ",
            a.rows, a.cols, b.rows, b.cols
        )
    })?;
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ar = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = dot(ar, b.row(j));
        }
    }
    Ok(out)
}

/// Softmax of `logits / t`. `t == 0` yields a one-hot on the first maximal entry.
pub fn softmax_with_temperature(logits: &[f64], t: f64) -> Result<Vec<f64>> {
    require(!logits.is_empty(), || "softmax of empty vector".into())?;
    require(t.is_finite() && t >= 0.0, || format!("invalid temperature {t}"))?;
    require(logits.iter().all(|u| u.is_finite()), || {
        "softmax logits must be finite".into()
    })?;
    if t == 0.0 {
        let k = argmax(logits);
        let mut p = vec![0.0; logits.len()];
        p[k] = 1.0;
        return Ok(p);
    }
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &u| m.max(u));
    let mut p: Vec<f64> = logits.iter().map(|&u| ((u - max) / t).exp()).collect();
    let sum: f64 = p.iter().sum();
    for v in &mut p {
        *v /= sum;
    }
    Ok(p)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Lower-triangular `L` with `L·Lᵀ = h`.
pub fn cholesky(h: &Matrix) -> Result<Matrix> {
    let n = h.rows;
    require(h.rows == h.cols, || {
        format!("cholesky of non-square {}x{}", h.rows, h.cols)
    })?;
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (h.get(i, j), h.get(j, i));
            require((a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs())), || {
                format!("cholesky input not symmetric at ({i},{j}): {a} vs {b}")
            })?;
        }
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let lj = &l.data[j * n..j * n + j];
        let s = h.get(j, j) - dot(lj, lj);
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: s });
        }
        let d = s.sqrt();
        l.data[j * n + j] = d;
        for i in j + 1..n {
            let v = (h.get(i, j) - dot(&l.data[i * n..i * n + j], &l.data[j * n..j * n + j])) / d;
            l.data[i * n + j] = v;
        }
    }
    Ok(l)
}

/// `(L·Lᵀ)⁻¹` from a lower-triangular factor, via triangular inversion.
pub fn inverse_from_cholesky(l: &Matrix) -> Result<Matrix> {
    let n = l.rows;
    require(l.rows == l.cols, || "cholesky factor must be square".into())?;
    for i in 0..n {
        if l.get(i, i) == 0.0 {
            return Err(Error::Singular(i));
        }
    }
    // Rows of L⁻¹ by forward substitution.
    let mut linv = Matrix::zeros(n, n);
    for i in 0..n {
        linv.data[i * n + i] = 1.0 / l.get(i, i);
        for j in 0..i {
            let mut s = 0.0;
            for k in j..i {
                s += l.get(i, k) * linv.data[k * n + j];
            }
            linv.data[i * n + j] = -s / l.get(i, i);
        }
    }
    // H⁻¹ = L⁻ᵀ·L⁻¹; entry (i, j) sums over k ≥ max(i, j).
    let mut inv = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for k in i..n {
                s += linv.data[k * n + i] * linv.data[k * n + j];
            }
            inv.data[i * n + j] = s;
            inv.data[j * n + i] = s;
        }
    }
    Ok(inv)
}

/// Inverse of a symmetric positive-definite matrix.
pub fn spd_inverse(h: &Matrix) -> Result<Matrix> {
    inverse_from_cholesky(&cholesky(h)?)
}
