//! Dynamic mode decomposition and the discrete Koopman operator built on it.
//!
//! Given a sequence of snapshots u_1..u_M sampled every `dt`, the fit pairs
//! Y = [u_1..u_{M-1}] with Y' = [u_2..u_M], reduces Y by truncated SVD,
//! forms the reduced one-step operator A~ = U^T Y' V S^{-1}, and lifts its
//! eigenvectors back to full space as modes Phi = Y' V S^{-1} W. Continuous
//! growth rates are the principal-branch logarithm of the discrete
//! eigenvalues divided by `dt`, and amplitudes solve Phi b = u_1 in the
//! least-squares sense. Reconstruction at time t is Re(Phi exp(Omega t) b),
//! anchored so t = 0 corresponds to the first snapshot.

use crate::linalg::{
    self, eig_dense, matmul, pinv, svd_truncated, LinalgError, MatC, MatR,
};
use num_complex::Complex64;
use thiserror::Error;

type C = Complex64;

/// Relative singular-value cutoff used when callers do not supply one.
pub const DEFAULT_REL_CUTOFF: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum DmdError {
    #[error("snapshot matrix is invalid: {0}")]
    InvalidSnapshot(String),
    #[error("requested rank {requested} exceeds the usable maximum {max}")]
    RankTooLarge { requested: usize, max: usize },
    #[error("snapshot data has no numerical rank (all singular values vanish)")]
    DegenerateData,
    #[error("eigendecomposition of the reduced operator failed: {0}")]
    EigFailure(#[from] LinalgError),
}

/// A spatially flattened snapshot sequence: column j is the state at time
/// `j * dt` (relative to the first snapshot).
#[derive(Debug, Clone)]
pub struct SnapshotMatrix {
    pub values: MatR,
    pub dt: f64,
}

impl SnapshotMatrix {
    /// Validates shape, time step, and finiteness.
    pub fn new(values: MatR, dt: f64) -> Result<Self, DmdError> {
        if values.rows == 0 || values.cols < 2 {
            return Err(DmdError::InvalidSnapshot(format!(
                "need at least 1 spatial point and 2 snapshots, got {}x{}",
                values.rows, values.cols
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(DmdError::InvalidSnapshot(format!("time step must be positive, got {dt}")));
        }
        if !values.is_finite() {
            return Err(DmdError::InvalidSnapshot("non-finite snapshot entry".into()));
        }
        Ok(SnapshotMatrix { values, dt })
    }

    pub fn n_space(&self) -> usize {
        self.values.rows
    }

    pub fn n_time(&self) -> usize {
        self.values.cols
    }

    fn column(&self, j: usize) -> Vec<f64> {
        (0..self.values.rows).map(|i| self.values.get(i, j)).collect()
    }
}

/// A fitted decomposition. `rank` is the retained rank after the relative
/// cutoff; `requested_rank` records what the caller asked for.
#[derive(Debug, Clone)]
pub struct DmdModel {
    pub rank: usize,
    pub requested_rank: usize,
    /// Spatial modes, one column per retained eigenvalue (n_space x rank).
    pub modes: MatC,
    /// Discrete one-step eigenvalues lambda.
    pub eig_discrete: Vec<C>,
    /// Continuous growth rates omega = ln(lambda) / dt (principal branch).
    pub eig_continuous: Vec<C>,
    /// Mode amplitudes solving modes * b = u_1 in least squares.
    pub amplitudes: Vec<C>,
    pub dt: f64,
}

/// Real-valued reconstruction sampled at `eval_times`.
///
/// `imag_residual` is the largest imaginary magnitude discarded when taking
/// the real part, relative to the largest reconstructed magnitude; values
/// above `1e-6` indicate an imbalanced spectrum (a warning is logged).
#[derive(Debug, Clone)]
pub struct KoopmanOutput {
    pub values: MatR,
    pub eval_times: Vec<f64>,
    pub imag_residual: f64,
}

/// Fits a DMD of rank at most `r` to the snapshot sequence.
///
/// `r` must satisfy `1 <= r <= n_time - 1`. The retained rank can be lower
/// when trailing singular values fall under `rel_cutoff * sigma_max`; data
/// whose singular values all vanish is reported as [`DmdError::DegenerateData`].
pub fn dmd_fit(snapshots: &SnapshotMatrix, r: usize, rel_cutoff: f64) -> Result<DmdModel, DmdError> {
    let m = snapshots.n_time();
    let max_rank = m - 1;
    if r == 0 || r > max_rank {
        return Err(DmdError::RankTooLarge { requested: r, max: max_rank });
    }

    let n = snapshots.n_space();
    let y = MatR::from_fn(n, m - 1, |i, j| snapshots.values.get(i, j));
    let yp = MatR::from_fn(n, m - 1, |i, j| snapshots.values.get(i, j + 1));

    let svd = svd_truncated(&y, r, rel_cutoff)?;
    let rank = svd.rank();
    if rank == 0 {
        return Err(DmdError::DegenerateData);
    }

    // P = Y' V S^{-1} (n x rank), shared by the reduced operator and the
    // mode lift.
    let v = svd.vt.transpose();
    let mut p = matmul(&yp, &v)?;
    for i in 0..p.rows {
        for j in 0..rank {
            let val = p.get(i, j) / svd.sigma[j];
            p.set(i, j, val);
        }
    }
    let a_reduced = matmul(&svd.u.transpose(), &p)?;

    let (eig_discrete, w) = eig_dense(&a_reduced.to_complex())?;

    // Modes: Phi = P W.
    let modes = linalg::matmul_c(&p.to_complex(), &w)?;

    let eig_continuous: Vec<C> = eig_discrete.iter().map(|l| l.ln() / snapshots.dt).collect();

    // Amplitudes from the first snapshot.
    let phi_pinv = pinv(&modes, rel_cutoff)?;
    let u1: Vec<C> = snapshots.column(0).into_iter().map(|v| C::new(v, 0.0)).collect();
    let amplitudes = linalg::matvec_c(&phi_pinv, &u1)?;

    Ok(DmdModel {
        rank,
        requested_rank: r,
        modes,
        eig_discrete,
        eig_continuous,
        amplitudes,
        dt: snapshots.dt,
    })
}

/// Evaluates the fitted expansion Re(Phi exp(Omega t) b) at each requested
/// time (seconds relative to the first snapshot of the fitting data).
pub fn dmd_reconstruct(model: &DmdModel, eval_times: &[f64]) -> Result<KoopmanOutput, DmdError> {
    if eval_times.iter().any(|t| !t.is_finite()) {
        return Err(DmdError::InvalidSnapshot("non-finite evaluation time".into()));
    }
    let n = model.modes.rows;
    let k = model.rank;
    let mut values = MatR::zeros(n, eval_times.len());
    let mut max_abs = 0.0f64;
    let mut max_imag = 0.0f64;
    let mut coeff = vec![C::new(0.0, 0.0); k];
    for (ti, &t) in eval_times.iter().enumerate() {
        for j in 0..k {
            coeff[j] = model.amplitudes[j] * (model.eig_continuous[j] * t).exp();
        }
        for i in 0..n {
            let mut acc = C::new(0.0, 0.0);
            let row = &model.modes.data[i * k..(i + 1) * k];
            for (m, c) in row.iter().zip(coeff.iter()) {
                acc += m * c;
            }
            values.set(i, ti, acc.re);
            max_abs = max_abs.max(acc.re.abs());
            max_imag = max_imag.max(acc.im.abs());
        }
    }
    let imag_residual = if max_abs > 0.0 { max_imag / max_abs } else { max_imag };
    if imag_residual > 1e-6 {
        log::warn!(
            "imbalanced spectrum: reconstruction discards imaginary parts up to {imag_residual:.3e} of the field scale"
        );
    }
    Ok(KoopmanOutput { values, eval_times: eval_times.to_vec(), imag_residual })
}

/// The discrete Koopman operator: fits a DMD to the sequence and evaluates
/// the expansion `horizon_steps` ahead, producing one column per input
/// column at times `(j + horizon_steps) * dt`.
///
/// `horizon_steps = 0` reproduces the input exactly whenever the input lies
/// in the span of its own retained modes.
pub fn koopman_apply(
    sequence: &SnapshotMatrix,
    r: usize,
    horizon_steps: usize,
) -> Result<KoopmanOutput, DmdError> {
    let model = dmd_fit(sequence, r, DEFAULT_REL_CUTOFF)?;
    let times: Vec<f64> = (0..sequence.n_time())
        .map(|j| (j + horizon_steps) as f64 * sequence.dt)
        .collect();
    dmd_reconstruct(&model, &times)
}

/// CSV table of the fitted spectrum: one row per mode with the discrete
/// eigenvalue, continuous growth rate, and amplitude magnitude.
pub fn eigenvalue_csv(model: &DmdModel) -> String {
    let mut out = String::from("index,lambda_re,lambda_im,omega_re,omega_im,amplitude_abs\n");
    for j in 0..model.rank {
        let l = model.eig_discrete[j];
        let w = model.eig_continuous[j];
        let b = model.amplitudes[j].norm();
        out.push_str(&format!("{},{},{},{},{},{}\n", j, l.re, l.im, w.re, w.im, b));
    }
    out
}
