//! Dense complex eigendecomposition for small matrices.
//!
//! Hessenberg reduction by complex Householder reflectors, then an explicit
//! shifted QR iteration (Wilkinson shifts, Givens rotations) to Schur form,
//! then triangular back-substitution for eigenvectors. The reduced DMD
//! operators this serves are at most `EIG_SIZE_CAP` square, so the O(n^3)
//! explicit iteration is well within budget and easy to reason about.

use super::{LinalgError, MatC};
use num_complex::Complex64;

/// Hard cap on the matrix side accepted by [`eig_dense`].
pub const EIG_SIZE_CAP: usize = 128;

const MAX_ITERS_PER_VALUE: usize = 60;

type C = Complex64;

/// Eigenvalues and right eigenvectors of a square complex matrix.
///
/// Returns `(lambda, w)` with `w`'s columns unit-norm eigenvectors in the
/// same order as `lambda`. The decomposition satisfies
/// `a * w ~= w * diag(lambda)` for diagonalizable inputs; the residual is
/// checked by tests rather than inside this routine.
pub fn eig_dense(a: &MatC) -> Result<(Vec<C>, MatC), LinalgError> {
    if a.rows == 0 || a.cols == 0 {
        return Err(LinalgError::EmptyMatrix);
    }
    if a.rows != a.cols {
        return Err(LinalgError::NotSquare { rows: a.rows, cols: a.cols });
    }
    if a.rows > EIG_SIZE_CAP {
        return Err(LinalgError::SizeCapExceeded { n: a.rows, cap: EIG_SIZE_CAP });
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }

    let n = a.rows;
    if n == 1 {
        return Ok((vec![a.get(0, 0)], MatC::eye(1)));
    }

    // --- Hessenberg reduction, accumulating the unitary Q ---
    let mut h = a.clone();
    let mut z = MatC::eye(n);
    for k in 0..n.saturating_sub(2) {
        let x: Vec<C> = (k + 1..n).map(|i| h.get(i, k)).collect();
        if let Some(v) = make_householder_c(&x) {
            // Rows k+1.. from the left: H <- (I - 2vv^H) H.
            for j in k..n {
                let mut w = C::new(0.0, 0.0);
                for (i, vi) in v.iter().enumerate() {
                    w += vi.conj() * h.get(k + 1 + i, j);
                }
                w *= 2.0;
                for (i, vi) in v.iter().enumerate() {
                    let cur = h.get(k + 1 + i, j);
                    h.set(k + 1 + i, j, cur - w * vi);
                }
            }
            // Columns k+1.. from the right: H <- H (I - 2vv^H).
            for i in 0..n {
                let mut w = C::new(0.0, 0.0);
                for (j, vj) in v.iter().enumerate() {
                    w += h.get(i, k + 1 + j) * vj;
                }
                w *= 2.0;
                for (j, vj) in v.iter().enumerate() {
                    let cur = h.get(i, k + 1 + j);
                    h.set(i, k + 1 + j, cur - w * vj.conj());
                }
            }
            // Accumulate into Z the same right-multiplication.
            for i in 0..n {
                let mut w = C::new(0.0, 0.0);
                for (j, vj) in z.data[i * n + k + 1..i * n + n].iter().zip(v.iter()) {
                    w += *j * vj;
                }
                w *= 2.0;
                for (j, vj) in v.iter().enumerate() {
                    let cur = z.get(i, k + 1 + j);
                    z.set(i, k + 1 + j, cur - w * vj.conj());
                }
            }
        }
        // Entries below the subdiagonal are exactly zero from here on.
        for i in k + 2..n {
            h.set(i, k, C::new(0.0, 0.0));
        }
    }

    // --- Shifted QR iteration to (upper triangular) Schur form ---
    schur_qr(&mut h, &mut z, n)?;

    let lambda: Vec<C> = (0..n).map(|i| h.get(i, i)).collect();

    // --- Eigenvectors by back-substitution on the triangular factor ---
    let t_norm = h.frobenius_norm();
    let smallnum = f64::EPSILON * t_norm.max(1.0);
    let mut w = MatC::zeros(n, n);
    let mut y = vec![C::new(0.0, 0.0); n];
    for k in 0..n {
        for t in y.iter_mut() {
            *t = C::new(0.0, 0.0);
        }
        y[k] = C::new(1.0, 0.0);
        let lam = lambda[k];
        for i in (0..k).rev() {
            let mut s = C::new(0.0, 0.0);
            for j in i + 1..=k {
                s += h.get(i, j) * y[j];
            }
            let mut den = h.get(i, i) - lam;
            if den.norm() < smallnum {
                // Clustered or repeated eigenvalue: regularize the pivot so
                // the solve stays finite; the vector is normalized below.
                den = C::new(smallnum, 0.0);
            }
            y[i] = -s / den;
        }
        // v = Z * y (only the first k+1 entries of y are nonzero).
        let mut norm_sq = 0.0;
        let mut col = vec![C::new(0.0, 0.0); n];
        for i in 0..n {
            let mut acc = C::new(0.0, 0.0);
            for j in 0..=k {
                acc += z.get(i, j) * y[j];
            }
            norm_sq += acc.norm_sqr();
            col[i] = acc;
        }
        let norm = norm_sq.sqrt();
        let scale = if norm == 0.0 { 1.0 } else { 1.0 / norm };
        for i in 0..n {
            w.set(i, k, col[i] * scale);
        }
    }

    Ok((lambda, w))
}

/// v with |v| = 1 such that (I - 2vv^H) x = alpha e1. None if x is already
/// in that form.
fn make_householder_c(x: &[C]) -> Option<Vec<C>> {
    let norm = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return None;
    }
    // alpha = -phase(x0) * norm keeps v[0] = x0 - alpha away from
    // cancellation.
    let phase = if x[0].norm() == 0.0 { C::new(1.0, 0.0) } else { x[0] / x[0].norm() };
    let alpha = -phase * norm;
    let mut v = x.to_vec();
    v[0] -= alpha;
    let vnorm = v.iter().map(|t| t.norm_sqr()).sum::<f64>().sqrt();
    if vnorm == 0.0 {
        return None;
    }
    for t in v.iter_mut() {
        *t /= vnorm;
    }
    Some(v)
}

/// Complex Givens rotation: returns (c, s) with c real such that
/// [c s; -conj(s) c] * [f; g] = [r; 0].
fn givens_c(f: C, g: C) -> (f64, C) {
    if g.norm() == 0.0 {
        return (1.0, C::new(0.0, 0.0));
    }
    if f.norm() == 0.0 {
        return (0.0, g.conj() / g.norm());
    }
    let fa = f.norm();
    let denom = (fa * fa + g.norm_sqr()).sqrt();
    let c = fa / denom;
    let s = (f / fa) * g.conj() / denom;
    (c, s)
}

fn schur_qr(h: &mut MatC, z: &mut MatC, n: usize) -> Result<(), LinalgError> {
    let eps = f64::EPSILON;
    let max_iter = MAX_ITERS_PER_VALUE * n;
    let mut iter = 0usize;
    let mut hi = n - 1;
    let mut last_hi = hi;
    let mut stalled = 0usize;

    // Scratch for per-sweep rotations.
    let mut rot: Vec<(f64, C)> = vec![(1.0, C::new(0.0, 0.0)); n];

    loop {
        // Deflate negligible subdiagonals.
        while hi > 0 {
            let sub = h.get(hi, hi - 1).norm();
            let local = h.get(hi - 1, hi - 1).norm() + h.get(hi, hi).norm();
            if sub <= eps * local.max(f64::MIN_POSITIVE) {
                h.set(hi, hi - 1, C::new(0.0, 0.0));
                hi -= 1;
            } else {
                break;
            }
        }
        if hi == 0 {
            return Ok(());
        }
        iter += 1;
        if iter > max_iter {
            return Err(LinalgError::ConvergenceFailure {
                algorithm: "complex QR iteration",
                iterations: max_iter,
            });
        }
        if hi < last_hi {
            last_hi = hi;
            stalled = 0;
        } else {
            stalled += 1;
        }

        let mut lo = hi;
        while lo > 0 {
            let sub = h.get(lo, lo - 1).norm();
            let local = h.get(lo - 1, lo - 1).norm() + h.get(lo, lo).norm();
            if sub <= eps * local.max(f64::MIN_POSITIVE) {
                h.set(lo, lo - 1, C::new(0.0, 0.0));
                break;
            }
            lo -= 1;
        }

        // Wilkinson shift: the eigenvalue of the trailing 2x2 closest to
        // the corner entry. Fall back to the corner itself on breakdown.
        let a11 = h.get(hi - 1, hi - 1);
        let a12 = h.get(hi - 1, hi);
        let a21 = h.get(hi, hi - 1);
        let a22 = h.get(hi, hi);
        let tr = a11 + a22;
        let det = a11 * a22 - a12 * a21;
        let disc = (tr * tr - det * 4.0).sqrt();
        let l1 = (tr + disc) * 0.5;
        let l2 = (tr - disc) * 0.5;
        let mut mu = if (l1 - a22).norm() <= (l2 - a22).norm() { l1 } else { l2 };
        // Exceptional shift: spectra symmetric about the shift (permutation
        // blocks, roots of unity) make the plain Wilkinson step cycle, so
        // a stalled block gets nudged off the symmetry axis.
        if stalled > 0 && stalled % 10 == 0 {
            mu = a22 + C::new(0.75 * h.get(hi, hi - 1).norm(), 0.0);
        }

        // Explicit QR step on the active block: Q^H (H - mu I) = R, then
        // H <- R Q + mu I, accumulating Q into Z. Row rotations must run
        // to the right edge and column rotations to the top edge so the
        // Schur basis stays consistent with the deflated parts.
        for i in lo..=hi {
            let cur = h.get(i, i);
            h.set(i, i, cur - mu);
        }
        for k in lo..hi {
            let (c, s) = givens_c(h.get(k, k), h.get(k + 1, k));
            rot[k] = (c, s);
            for j in k..n {
                let top = h.get(k, j);
                let bot = h.get(k + 1, j);
                h.set(k, j, top * c + bot * s);
                h.set(k + 1, j, -top * s.conj() + bot * c);
            }
        }
        for k in lo..hi {
            let (c, s) = rot[k];
            // Right-multiply by the conjugate transpose of the k-th rotation.
            let row_end = (k + 2).min(n);
            for i in 0..row_end {
                let left = h.get(i, k);
                let right = h.get(i, k + 1);
                h.set(i, k, left * c + right * s.conj());
                h.set(i, k + 1, -left * s + right * c);
            }
            for i in 0..n {
                let left = z.get(i, k);
                let right = z.get(i, k + 1);
                z.set(i, k, left * c + right * s.conj());
                z.set(i, k + 1, -left * s + right * c);
            }
        }
        for i in lo..=hi {
            let cur = h.get(i, i);
            h.set(i, i, cur + mu);
        }
    }
}
