//! Shared helpers for integration tests: seeded matrix generators and an
//! independent one-sided Jacobi SVD oracle. The oracle deliberately shares
//! no code with the library's Golub-Kahan implementation so the two can
//! check each other.

#![allow(dead_code)]

use bno_core::linalg::MatR;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_mat(rows: usize, cols: usize, seed: u64) -> MatR {
    let mut r = rng(seed);
    MatR::from_fn(rows, cols, |_, _| r.gen_range(-1.0..1.0))
}

/// One-sided Jacobi SVD of a real matrix: returns (u, sigma, vt) with
/// sigma sorted descending. Plane rotations orthogonalize column pairs of
/// a working copy until every off-diagonal Gram entry is negligible.
pub fn jacobi_svd(a: &MatR) -> (MatR, Vec<f64>, MatR) {
    let m = a.rows;
    let n = a.cols;
    assert!(m >= n, "oracle expects a tall matrix");
    let mut w = a.clone();
    let mut v = MatR::eye(n);

    for _sweep in 0..64 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..m {
                    let wp = w.get(i, p);
                    let wq = w.get(i, q);
                    app += wp * wp;
                    aqq += wq * wq;
                    apq += wp * wq;
                }
                if apq.abs() <= 1e-15 * (app * aqq).sqrt() || app * aqq == 0.0 {
                    continue;
                }
                rotated = true;
                let theta = 0.5 * (2.0 * apq).atan2(aqq - app);
                let c = theta.cos();
                let s = theta.sin();
                for i in 0..m {
                    let wp = w.get(i, p);
                    let wq = w.get(i, q);
                    w.set(i, p, c * wp - s * wq);
                    w.set(i, q, s * wp + c * wq);
                }
                for i in 0..n {
                    let vp = v.get(i, p);
                    let vq = v.get(i, q);
                    v.set(i, p, c * vp - s * vq);
                    v.set(i, q, s * vp + c * vq);
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| w.get(i, j).powi(2)).sum::<f64>().sqrt())
        .collect();

    // Sort descending, permuting the columns of w and v to match.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());
    let mut u = MatR::zeros(m, n);
    let mut vt = MatR::zeros(n, n);
    let mut sigma_sorted = vec![0.0; n];
    for (new_j, &old_j) in order.iter().enumerate() {
        sigma_sorted[new_j] = sigma[old_j];
        let s = sigma[old_j];
        for i in 0..m {
            u.set(i, new_j, if s > 0.0 { w.get(i, old_j) / s } else { 0.0 });
        }
        for i in 0..n {
            vt.set(new_j, i, v.get(i, old_j));
        }
    }
    sigma = sigma_sorted;
    (u, sigma, vt)
}
