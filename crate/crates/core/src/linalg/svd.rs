//! Truncated SVD via Householder bidiagonalization and implicit-shift QR.
//!
//! The snapshot matrices this serves are tall and thin (many spatial points,
//! few time samples), so the factorization always works on the tall
//! orientation and accumulates thin factors only.

use super::{LinalgError, MatR, SvdResult};

const MAX_SWEEPS_PER_VALUE: usize = 40;

/// Truncated SVD of `a`: keeps the top `min(r, effective_rank)` triplets,
/// where the effective rank counts singular values at least
/// `rel_cutoff * sigma_max`.
///
/// `sigma` comes back sorted descending, `u` has orthonormal columns and
/// `vt` orthonormal rows. `r` must be at least 1; rank-0 inputs (all zero)
/// yield empty factors.
pub fn svd_truncated(a: &MatR, r: usize, rel_cutoff: f64) -> Result<SvdResult, LinalgError> {
    assert!(r >= 1, "requested rank must be at least 1");
    assert!(rel_cutoff >= 0.0, "relative cutoff must be non-negative");
    if a.rows == 0 || a.cols == 0 {
        return Err(LinalgError::EmptyMatrix);
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }

    // Work on the tall orientation; swap factors back afterwards.
    let transposed = a.rows < a.cols;
    let work = if transposed { a.transpose() } else { a.clone() };

    let (u_full, mut sigma, v_full) = svd_tall(&work)?;

    // Descending sort with a permutation applied to the factor columns.
    let n = sigma.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).expect("finite singular values"));
    let sigma_sorted: Vec<f64> = order.iter().map(|&i| sigma[i]).collect();
    sigma = sigma_sorted;

    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    let effective_rank = if sigma_max == 0.0 {
        0
    } else {
        sigma.iter().filter(|&&s| s >= rel_cutoff * sigma_max).count()
    };
    let keep = r.min(effective_rank);

    let pick_cols = |m: &MatR, count: usize| -> MatR {
        let mut out = MatR::zeros(m.rows, count);
        for (new_j, &old_j) in order.iter().take(count).enumerate() {
            for i in 0..m.rows {
                out.set(i, new_j, m.get(i, old_j));
            }
        }
        out
    };

    let u_kept = pick_cols(&u_full, keep);
    let v_kept = pick_cols(&v_full, keep);
    sigma.truncate(keep);

    if transposed {
        // a^T = U S V^T  =>  a = V S U^T.
        Ok(SvdResult { u: v_kept, sigma, vt: u_kept.transpose() })
    } else {
        Ok(SvdResult { u: u_kept, sigma, vt: v_kept.transpose() })
    }
}

/// Full thin SVD of a tall matrix (rows >= cols). Returns (u, sigma, v)
/// with u: m x n, sigma: n, v: n x n, unsorted.
fn svd_tall(a: &MatR) -> Result<(MatR, Vec<f64>, MatR), LinalgError> {
    let m = a.rows;
    let n = a.cols;
    debug_assert!(m >= n);

    // --- Bidiagonalization with explicit reflector storage ---
    let mut b = a.clone();
    let mut left_vs: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    let mut right_vs: Vec<Option<Vec<f64>>> = Vec::with_capacity(n.saturating_sub(2));

    for k in 0..n {
        // Left reflector zeroing b[k+1.., k].
        let col: Vec<f64> = (k..m).map(|i| b.get(i, k)).collect();
        let v = make_householder(&col);
        if let Some(ref v) = v {
            for j in k..n {
                let mut w = 0.0;
                for (i, vi) in v.iter().enumerate() {
                    w += vi * b.get(k + i, j);
                }
                w *= 2.0;
                for (i, vi) in v.iter().enumerate() {
                    let cur = b.get(k + i, j);
                    b.set(k + i, j, cur - w * vi);
                }
            }
        }
        left_vs.push(v);

        // Right reflector zeroing b[k, k+2..].
        if k + 2 < n {
            let row: Vec<f64> = (k + 1..n).map(|j| b.get(k, j)).collect();
            let v = make_householder(&row);
            if let Some(ref v) = v {
                for i in k..m {
                    let mut w = 0.0;
                    for (j, vj) in v.iter().enumerate() {
                        w += vj * b.get(i, k + 1 + j);
                    }
                    w *= 2.0;
                    for (j, vj) in v.iter().enumerate() {
                        let cur = b.get(i, k + 1 + j);
                        b.set(i, k + 1 + j, cur - w * vj);
                    }
                }
            }
            right_vs.push(v);
        }
    }

    let mut d: Vec<f64> = (0..n).map(|i| b.get(i, i)).collect();
    let mut e: Vec<f64> = (0..n.saturating_sub(1)).map(|i| b.get(i, i + 1)).collect();

    // --- Accumulate thin U (m x n) and V (n x n) ---
    let mut u = MatR::from_fn(m, n, |i, j| if i == j { 1.0 } else { 0.0 });
    for k in (0..n).rev() {
        if let Some(v) = &left_vs[k] {
            for j in 0..n {
                let mut w = 0.0;
                for (i, vi) in v.iter().enumerate() {
                    w += vi * u.get(k + i, j);
                }
                w *= 2.0;
                for (i, vi) in v.iter().enumerate() {
                    let cur = u.get(k + i, j);
                    u.set(k + i, j, cur - w * vi);
                }
            }
        }
    }
    let mut v = MatR::eye(n);
    for k in (0..right_vs.len()).rev() {
        if let Some(h) = &right_vs[k] {
            for j in 0..n {
                let mut w = 0.0;
                for (i, hi) in h.iter().enumerate() {
                    w += hi * v.get(k + 1 + i, j);
                }
                w *= 2.0;
                for (i, hi) in h.iter().enumerate() {
                    let cur = v.get(k + 1 + i, j);
                    v.set(k + 1 + i, j, cur - w * hi);
                }
            }
        }
    }

    // --- Implicit-shift QR on the bidiagonal (d, e) ---
    if n > 0 {
        bidiagonal_qr(&mut d, &mut e, &mut u, &mut v)?;
    }

    // Singular values are non-negative by convention.
    for i in 0..n {
        if d[i] < 0.0 {
            d[i] = -d[i];
            for row in 0..m {
                let cur = u.get(row, i);
                u.set(row, i, -cur);
            }
        }
    }

    Ok((u, d, v))
}

/// v such that (I - 2 v v^T) x = alpha * e1, with v unit length.
/// None when x is already (numerically) a multiple of e1 with zero tail.
fn make_householder(x: &[f64]) -> Option<Vec<f64>> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return None;
    }
    let tail_zero = x.iter().skip(1).all(|&v| v == 0.0);
    if tail_zero && x[0] > 0.0 {
        // Already alpha * e1 with the sign convention below; nothing to do.
        // (x[0] < 0 still needs a reflection to keep signs consistent, and
        // the branch below handles it without cancellation.)
        return None;
    }
    let mut v = x.to_vec();
    // alpha = -sign(x0) * norm avoids cancellation in v[0].
    let alpha = if x[0] >= 0.0 { -norm } else { norm };
    v[0] -= alpha;
    let vnorm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
    if vnorm == 0.0 {
        return None;
    }
    for t in v.iter_mut() {
        *t /= vnorm;
    }
    Some(v)
}

/// (c, s) with c*a + s*b = r and -s*a + c*b = 0.
#[inline]
fn givens(a: f64, b: f64) -> (f64, f64) {
    let r = a.hypot(b);
    if r == 0.0 {
        (1.0, 0.0)
    } else {
        (a / r, b / r)
    }
}

/// Combines columns k and k+1: col_k <- c*col_k + s*col_k1,
/// col_k1 <- -s*col_k + c*col_k1.
#[inline]
fn rotate_cols(m: &mut MatR, k: usize, c: f64, s: f64) {
    let cols = m.cols;
    for row in m.data.chunks_exact_mut(cols) {
        let a = row[k];
        let b = row[k + 1];
        row[k] = c * a + s * b;
        row[k + 1] = -s * a + c * b;
    }
}

fn bidiagonal_qr(
    d: &mut [f64],
    e: &mut [f64],
    u: &mut MatR,
    v: &mut MatR,
) -> Result<(), LinalgError> {
    let n = d.len();
    if n <= 1 {
        return Ok(());
    }
    let eps = f64::EPSILON;
    let max_iter = MAX_SWEEPS_PER_VALUE * n;
    let mut iter = 0usize;

    let mut hi = n - 1;
    loop {
        // Deflate converged superdiagonal entries.
        for i in 0..n - 1 {
            if e[i].abs() <= eps * (d[i].abs() + d[i + 1].abs()) {
                e[i] = 0.0;
            }
        }
        while hi > 0 && e[hi - 1] == 0.0 {
            hi -= 1;
        }
        if hi == 0 {
            return Ok(());
        }
        iter += 1;
        if iter > max_iter {
            return Err(LinalgError::ConvergenceFailure {
                algorithm: "bidiagonal QR",
                iterations: max_iter,
            });
        }

        let mut lo = hi - 1;
        while lo > 0 && e[lo - 1] != 0.0 {
            lo -= 1;
        }

        // Wilkinson shift from the trailing 2x2 of B^T B. A zero-shift step
        // is used when the block contains a negligible diagonal entry; it
        // keeps the chase well-defined and still converges.
        let scale = d[lo..=hi]
            .iter()
            .chain(e[lo..hi].iter())
            .fold(0.0f64, |acc, &t| acc.max(t.abs()));
        let tiny_diag = d[lo..=hi].iter().any(|&t| t.abs() <= eps * scale);
        let mu = if tiny_diag {
            0.0
        } else {
            let e_above = if hi >= 2 && hi - 1 > lo { e[hi - 2] } else { 0.0 };
            let t11 = d[hi - 1] * d[hi - 1] + e_above * e_above;
            let t12 = d[hi - 1] * e[hi - 1];
            let t22 = d[hi] * d[hi] + e[hi - 1] * e[hi - 1];
            let dd = 0.5 * (t11 - t22);
            let denom = dd + dd.signum() * (dd * dd + t12 * t12).sqrt();
            if denom == 0.0 {
                0.0
            } else {
                t22 - t12 * t12 / denom
            }
        };

        // Bulge chase over the [lo..=hi] block.
        let mut f = d[lo] * d[lo] - mu;
        let mut g = d[lo] * e[lo];
        for k in lo..hi {
            // Right rotation on columns (k, k+1).
            let (c1, s1) = givens(f, g);
            if k > lo {
                e[k - 1] = c1 * f + s1 * g;
            }
            let t11 = d[k];
            let t12 = e[k];
            let t22 = d[k + 1];
            d[k] = c1 * t11 + s1 * t12;
            e[k] = -s1 * t11 + c1 * t12;
            let bulge = s1 * t22;
            d[k + 1] = c1 * t22;
            rotate_cols(v, k, c1, s1);

            // Left rotation on rows (k, k+1) zeroing the bulge.
            let (c2, s2) = givens(d[k], bulge);
            d[k] = c2 * d[k] + s2 * bulge;
            let t1 = e[k];
            let t2 = d[k + 1];
            e[k] = c2 * t1 + s2 * t2;
            d[k + 1] = -s2 * t1 + c2 * t2;
            rotate_cols(u, k, c2, s2);

            if k + 1 < hi {
                f = e[k];
                g = s2 * e[k + 1];
                e[k + 1] *= c2;
            }
        }
    }
}
