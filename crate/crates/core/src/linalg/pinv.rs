//! Moore-Penrose pseudoinverse of complex matrices.
//!
//! Uses a one-sided Jacobi SVD: plane rotations orthogonalize column pairs
//! of the working copy until the implicit Gram matrix is diagonal, which
//! delivers singular values and both factor sets in one pass. Accuracy of
//! small singular values is excellent, which matters because the DMD
//! amplitude solve runs through this on nearly rank-deficient mode bases.

use super::{LinalgError, MatC};
use num_complex::Complex64;

type C = Complex64;

const MAX_SWEEPS: usize = 60;

/// Pseudoinverse with a relative singular-value cutoff: singular values
/// below `rel_cutoff * sigma_max` are treated as zero. The result has the
/// transposed shape of `a`.
pub fn pinv(a: &MatC, rel_cutoff: f64) -> Result<MatC, LinalgError> {
    assert!(rel_cutoff >= 0.0, "relative cutoff must be non-negative");
    if a.rows == 0 || a.cols == 0 {
        return Err(LinalgError::EmptyMatrix);
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    // Work on the tall orientation: pinv(A^H) = pinv(A)^H.
    if a.rows < a.cols {
        let at = super::conj_transpose(a);
        let p = pinv(&at, rel_cutoff)?;
        return Ok(super::conj_transpose(&p));
    }

    let m = a.rows;
    let n = a.cols;
    let mut w = a.clone(); // columns get rotated in place
    let mut v = MatC::eye(n);

    let tol = 1e-14;
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut off = false;
        for p in 0..n {
            for q in p + 1..n {
                // 2x2 Gram block of columns p, q.
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = C::new(0.0, 0.0);
                for i in 0..m {
                    let wp = w.get(i, p);
                    let wq = w.get(i, q);
                    app += wp.norm_sqr();
                    aqq += wq.norm_sqr();
                    apq += wp.conj() * wq;
                }
                let bound = tol * (app * aqq).sqrt();
                if apq.norm() <= bound || bound == 0.0 {
                    continue;
                }
                off = true;
                // Unitary plane rotation diagonalizing the Gram block:
                // theta from the real Jacobi formula, phase from apq.
                let sigma = apq / apq.norm();
                let theta = 0.5 * (2.0 * apq.norm()).atan2(aqq - app);
                let c = theta.cos();
                let s = theta.sin();
                let s_sig = sigma * s;
                let s_sig_conj = sigma.conj() * s;
                for i in 0..m {
                    let wp = w.get(i, p);
                    let wq = w.get(i, q);
                    w.set(i, p, wp * c - wq * s_sig_conj);
                    w.set(i, q, wp * s_sig + wq * c);
                }
                for i in 0..n {
                    let vp = v.get(i, p);
                    let vq = v.get(i, q);
                    v.set(i, p, vp * c - vq * s_sig_conj);
                    v.set(i, q, vp * s_sig + vq * c);
                }
            }
        }
        if !off {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::ConvergenceFailure {
            algorithm: "one-sided Jacobi SVD",
            iterations: MAX_SWEEPS,
        });
    }

    // Column norms are the singular values.
    let sigma: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| w.get(i, j).norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let sigma_max = sigma.iter().cloned().fold(0.0, f64::max);

    // pinv = sum over kept j of v_j (1/sigma_j) u_j^H with u_j = w_j/sigma_j.
    let mut out = MatC::zeros(n, m);
    if sigma_max > 0.0 {
        let cutoff = rel_cutoff * sigma_max;
        for j in 0..n {
            if sigma[j] <= cutoff || sigma[j] == 0.0 {
                continue;
            }
            let inv_s2 = 1.0 / (sigma[j] * sigma[j]);
            for r in 0..n {
                let vr = v.get(r, j);
                for col in 0..m {
                    let cur = out.get(r, col);
                    out.set(r, col, cur + vr * w.get(col, j).conj() * inv_s2);
                }
            }
        }
    }
    Ok(out)
}
