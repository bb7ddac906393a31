//! Dense matrix types and the factorizations the DMD path relies on.
//!
//! Matrices are row-major over `f64` / `Complex64`. The sizes involved are
//! modest (snapshot matrices are tall and thin, reduced operators are at
//! most `EIG_SIZE_CAP` square), so the kernels favor clarity and accuracy
//! over blocking: Householder bidiagonalization + implicit-shift QR for the
//! SVD, Hessenberg reduction + shifted QR for eigenpairs, and a one-sided
//! Jacobi SVD for the complex pseudoinverse.

mod eig;
mod pinv;
mod svd;

pub use eig::{eig_dense, EIG_SIZE_CAP};
pub use pinv::pinv;
pub use svd::svd_truncated;

use num_complex::Complex64;
use thiserror::Error;

/// Errors reported by the dense kernels.
#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix has zero rows or columns")]
    EmptyMatrix,
    #[error("matrix contains a non-finite entry")]
    NonFinite,
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: left is {lr}x{lc}, right is {rr}x{rc}")]
    DimMismatch { lr: usize, lc: usize, rr: usize, rc: usize },
    #[error("{algorithm} did not converge within {iterations} iterations")]
    ConvergenceFailure { algorithm: &'static str, iterations: usize },
    #[error("matrix side {n} exceeds the dense eigensolver cap {cap}")]
    SizeCapExceeded { n: usize, cap: usize },
}

/// Dense real matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MatR {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatR {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        MatR { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Builds a matrix from row-major data. The length must match.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length mismatch");
        MatR { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        MatR { rows, cols, data }
    }

    pub fn eye(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> MatR {
        MatR::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_complex(&self) -> MatC {
        MatC {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MatC {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl MatC {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        MatC { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length mismatch");
        MatC { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        MatC { rows, cols, data }
    }

    pub fn eye(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| {
            if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }
        })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn real_part(&self) -> MatR {
        MatR {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v.re).collect(),
        }
    }

    pub fn max_imag_abs(&self) -> f64 {
        self.data.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
    }
}

/// Truncated SVD factors: `a ~ u * diag(sigma) * vt`.
///
/// `sigma` is sorted descending; `u` is `m x rank` with orthonormal
/// columns, `vt` is `rank x n` with orthonormal rows.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: MatR,
    pub sigma: Vec<f64>,
    pub vt: MatR,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }
}

/// Real matrix product. Errors on inner-dimension mismatch.
pub fn matmul(a: &MatR, b: &MatR) -> Result<MatR, LinalgError> {
    if a.cols != b.rows {
        return Err(LinalgError::DimMismatch { lr: a.rows, lc: a.cols, rr: b.rows, rc: b.cols });
    }
    let mut out = MatR::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += aik * bv;
            }
        }
    }
    Ok(out)
}

/// Complex matrix product. Errors on inner-dimension mismatch.
pub fn matmul_c(a: &MatC, b: &MatC) -> Result<MatC, LinalgError> {
    if a.cols != b.rows {
        return Err(LinalgError::DimMismatch { lr: a.rows, lc: a.cols, rr: b.rows, rc: b.cols });
    }
    let mut out = MatC::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik.re == 0.0 && aik.im == 0.0 {
                continue;
            }
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += aik * bv;
            }
        }
    }
    Ok(out)
}

/// Real matrix-vector product.
pub fn matvec(a: &MatR, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if a.cols != x.len() {
        return Err(LinalgError::DimMismatch { lr: a.rows, lc: a.cols, rr: x.len(), rc: 1 });
    }
    let mut out = vec![0.0; a.rows];
    for i in 0..a.rows {
        let row = a.row(i);
        out[i] = row.iter().zip(x.iter()).map(|(&r, &v)| r * v).sum();
    }
    Ok(out)
}

/// Complex matrix-vector product.
pub fn matvec_c(a: &MatC, x: &[Complex64]) -> Result<Vec<Complex64>, LinalgError> {
    if a.cols != x.len() {
        return Err(LinalgError::DimMismatch { lr: a.rows, lc: a.cols, rr: x.len(), rc: 1 });
    }
    let mut out = vec![Complex64::new(0.0, 0.0); a.rows];
    for i in 0..a.rows {
        let row = &a.data[i * a.cols..(i + 1) * a.cols];
        out[i] = row.iter().zip(x.iter()).map(|(&r, &v)| r * v).sum();
    }
    Ok(out)
}

/// Conjugate transpose.
pub fn conj_transpose(a: &MatC) -> MatC {
    MatC::from_fn(a.cols, a.rows, |i, j| a.get(j, i).conj())
}
