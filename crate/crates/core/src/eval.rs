//! Evaluation protocols: one-step prediction, autoregressive window
//! rollout with divergence detection, zero-shot super-resolution, line
//! profiles, branch timing probes, and report emission.
//!
//! Everything here consumes normalized windows, the same representation
//! the trainer sees. The [`Forecaster`] trait gives the three model kinds
//! (hybrid, CNN baseline, pure DMD) a common window-to-window interface so
//! the protocols are written once.

use crate::data::{build_windows, zscore_apply, DataError, Dataset, FieldSeries, WindowSpec};
use crate::dmd::DmdError;
use crate::model::checkpoint::AnyModel;
use crate::model::{
    bno_forward, cnn_forward, koopman_forecast, transfer_bno_to_cnn, BnoModel, CnnModel,
    ModelError, WINDOW_DT,
};
use crate::neural::Tensor3;
use crate::train::EpochRecord;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{what} index {got} out of range (max {max})")]
    IndexOutOfRange { what: &'static str, got: usize, max: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// A window-to-window predictor. `predict` maps an (N_x, N_t, 1) window
/// to the window `s` window-steps later, in normalized units.
pub trait Forecaster {
    fn tag(&self) -> &'static str;
    fn predict(&self, window: &Tensor3) -> Result<Tensor3, ModelError>;
}

impl Forecaster for BnoModel {
    fn tag(&self) -> &'static str {
        "bno"
    }

    fn predict(&self, window: &Tensor3) -> Result<Tensor3, ModelError> {
        bno_forward(self, window, WINDOW_DT)
    }
}

impl Forecaster for CnnModel {
    fn tag(&self) -> &'static str {
        "cnn"
    }

    fn predict(&self, window: &Tensor3) -> Result<Tensor3, ModelError> {
        cnn_forward(self, window)
    }
}

/// Pure Koopman baseline: fit the window, forecast `horizon` window steps
/// ahead, no learned correction. Degenerate inputs are a hard error here
/// because there is no other branch to fall back on.
#[derive(Debug, Clone, Copy)]
pub struct DmdBaseline {
    pub rank: usize,
    pub horizon: usize,
}

impl Forecaster for DmdBaseline {
    fn tag(&self) -> &'static str {
        "dmd"
    }

    fn predict(&self, window: &Tensor3) -> Result<Tensor3, ModelError> {
        match koopman_forecast(window, self.rank, self.horizon, WINDOW_DT)? {
            Some(k) => Ok(k),
            None => Err(ModelError::Dmd(DmdError::DegenerateData)),
        }
    }
}

impl Forecaster for AnyModel {
    fn tag(&self) -> &'static str {
        match self {
            AnyModel::Bno(_) => "bno",
            AnyModel::Cnn(_) => "cnn",
        }
    }

    fn predict(&self, window: &Tensor3) -> Result<Tensor3, ModelError> {
        match self {
            AnyModel::Bno(m) => m.predict(window),
            AnyModel::Cnn(m) => m.predict(window),
        }
    }
}

/// Mean squared error between two equal-shape tensors. Shared by every
/// protocol so one-step and single-step-rollout numbers agree exactly.
pub fn window_mse(pred: &Tensor3, truth: &Tensor3) -> Result<f64, EvalError> {
    if pred.shape() != truth.shape() {
        return Err(EvalError::Shape(format!(
            "prediction shape {:?} does not match truth {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    let sq: f64 = pred.data.iter().zip(truth.data.iter()).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sq / pred.data.len() as f64)
}

/// One forward pass per window; returns the per-window MSE list in input
/// order.
pub fn one_step_predict<F: Forecaster + ?Sized>(
    forecaster: &F,
    inputs: &[Tensor3],
    labels: &[Tensor3],
) -> Result<Vec<f64>, EvalError> {
    if inputs.len() != labels.len() {
        return Err(EvalError::Shape(format!(
            "{} inputs vs {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    let mut out = Vec::with_capacity(inputs.len());
    for (u, label) in inputs.iter().zip(labels.iter()) {
        let pred = forecaster.predict(u)?;
        out.push(window_mse(&pred, label)?);
    }
    Ok(out)
}

/// Mean of the per-window MSEs at the given indices (NaN when empty).
pub fn mean_at(mses: &[f64], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return f64::NAN;
    }
    idx.iter().map(|&i| mses[i]).sum::<f64>() / idx.len() as f64
}

#[derive(Debug, Clone)]
pub struct RolloutResult {
    /// Steps requested.
    pub steps: usize,
    /// Predicted windows, one per completed step (truncated at divergence).
    pub predictions: Vec<Tensor3>,
    /// MSE of each prediction against its truth window.
    pub per_step_mse: Vec<f64>,
    /// 1-based step at which the output magnitude crossed the divergence
    /// threshold (that step's prediction is still recorded).
    pub diverged_at: Option<usize>,
}

/// Magnitude multiple of the initial window scale beyond which a rollout
/// counts as diverged.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

fn max_abs(t: &Tensor3) -> f64 {
    t.data.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Feeds the model its own output `steps` times, window to window. Each
/// prediction advances the window by the model's step shift, so
/// `truth[j]` must be the ground-truth window that many shifts after
/// `initial`. Divergence (non-finite values, or max magnitude beyond
/// [`DIVERGENCE_FACTOR`] times the initial scale) stops the loop and is
/// reported as data, not as an error.
pub fn rollout<F: Forecaster + ?Sized>(
    forecaster: &F,
    initial: &Tensor3,
    truth: &[&Tensor3],
    steps: usize,
) -> Result<RolloutResult, EvalError> {
    if steps == 0 {
        return Err(EvalError::Shape("rollout needs at least 1 step".into()));
    }
    if truth.len() < steps {
        return Err(EvalError::Shape(format!(
            "rollout over {steps} steps needs {steps} truth windows, got {}",
            truth.len()
        )));
    }
    let scale = max_abs(initial);
    let threshold = DIVERGENCE_FACTOR * if scale > 0.0 { scale } else { 1.0 };

    let mut predictions = Vec::with_capacity(steps);
    let mut per_step_mse = Vec::with_capacity(steps);
    let mut diverged_at = None;
    let mut cur = initial.clone();
    for (j, t) in truth.iter().take(steps).enumerate() {
        let pred = forecaster.predict(&cur)?;
        per_step_mse.push(window_mse(&pred, t)?);
        let m = max_abs(&pred);
        predictions.push(pred.clone());
        if !m.is_finite() || m > threshold {
            diverged_at = Some(j + 1);
            break;
        }
        cur = pred;
    }
    Ok(RolloutResult { steps, predictions, per_step_mse, diverged_at })
}

/// Rollout starting from dataset window `start`, using the dataset's own
/// label windows as truth: step j is checked against
/// `labels[start + (j-1)*s]`, which equals the input window shifted by
/// j*s window steps.
pub fn rollout_against_dataset<F: Forecaster + ?Sized>(
    forecaster: &F,
    ds: &Dataset,
    start: usize,
    steps: usize,
) -> Result<RolloutResult, EvalError> {
    if start >= ds.inputs.len() {
        return Err(EvalError::IndexOutOfRange {
            what: "rollout start window",
            got: start,
            max: ds.inputs.len().saturating_sub(1),
        });
    }
    if steps == 0 {
        return Err(EvalError::Shape("rollout needs at least 1 step".into()));
    }
    let last = start + (steps - 1) * ds.window.s;
    if last >= ds.labels.len() {
        return Err(EvalError::IndexOutOfRange {
            what: "rollout truth window",
            got: last,
            max: ds.labels.len().saturating_sub(1),
        });
    }
    let truth: Vec<&Tensor3> = (0..steps).map(|j| &ds.labels[start + j * ds.window.s]).collect();
    rollout(forecaster, &ds.inputs[start], &truth, steps)
}

/// One row of the comparison table: final losses, their gap, and branch
/// timings where measured (NaN otherwise). `input_sha256` ties the row to
/// the exact data it was computed from.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub model: String,
    pub resolution: (usize, usize),
    pub train_mse: f64,
    pub val_mse: f64,
    pub gap: f64,
    pub dmd_seconds: f64,
    pub cnn_seconds: f64,
    pub input_sha256: String,
}

/// Hash of a field's dimensions, time step, and raw values; reports carry
/// it so every number stays traceable to its input data.
pub fn field_sha256(f: &FieldSeries) -> String {
    let mut h = Sha256::new();
    for d in [f.nx as u64, f.ny as u64, f.nt as u64] {
        h.update(d.to_le_bytes());
    }
    h.update(f.dt.to_le_bytes());
    for v in &f.values {
        h.update(v.to_le_bytes());
    }
    let digest = h.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Zero-shot evaluation of a trained model on a field at any resolution:
/// normalizes the raw field with the model's stored statistics, builds
/// windows with the same layout and split, and reports the one-step MSE
/// over the validation portion. At the training resolution on the training
/// field this reproduces the trained validation MSE.
///
/// `train_mse` is the model's final training loss if known (it lives in
/// the training summary, not the checkpoint); pass NaN when unavailable.
pub fn superres_eval(
    model: &AnyModel,
    field: &FieldSeries,
    w: &WindowSpec,
    split_fraction: f64,
    train_mse: f64,
) -> Result<EvalReport, EvalError> {
    let stats = model.norm_stats();
    let normalized = zscore_apply(field, &stats);
    let ds = build_windows(&normalized, w, split_fraction)?;
    let mses = one_step_predict(model, &ds.inputs, &ds.labels)?;
    let val_mse = mean_at(&mses, &ds.val_idx);
    Ok(EvalReport {
        model: model.tag().to_string(),
        resolution: (field.nx, field.ny),
        train_mse,
        val_mse,
        gap: (train_mse - val_mse).abs(),
        dmd_seconds: f64::NAN,
        cnn_seconds: f64::NAN,
        input_sha256: field_sha256(field),
    })
}

/// Values along y at one (x, t) station of a field.
pub fn line_profile(f: &FieldSeries, x_index: usize, t_index: usize) -> Result<Vec<f64>, EvalError> {
    if x_index >= f.nx {
        return Err(EvalError::IndexOutOfRange {
            what: "x",
            got: x_index,
            max: f.nx - 1,
        });
    }
    if t_index >= f.nt {
        return Err(EvalError::IndexOutOfRange {
            what: "t",
            got: t_index,
            max: f.nt - 1,
        });
    }
    Ok((0..f.ny).map(|y| f.get(x_index, y, t_index)).collect())
}

/// Values along y at one (x, time-column) station of a flattened window,
/// given the grid shape it was flattened from.
pub fn line_profile_window(
    t3: &Tensor3,
    nx: usize,
    ny: usize,
    x_index: usize,
    t_index: usize,
) -> Result<Vec<f64>, EvalError> {
    if nx * ny != t3.n_space {
        return Err(EvalError::Shape(format!(
            "grid {nx}x{ny} does not flatten to {} points",
            t3.n_space
        )));
    }
    if x_index >= nx {
        return Err(EvalError::IndexOutOfRange { what: "x", got: x_index, max: nx - 1 });
    }
    if t_index >= t3.n_time {
        return Err(EvalError::IndexOutOfRange {
            what: "t",
            got: t_index,
            max: t3.n_time - 1,
        });
    }
    Ok((0..ny).map(|y| t3.get(x_index * ny + y, t_index, 0)).collect())
}

/// Wall-clock seconds for `reps` passes of the Koopman branch over the
/// windows (fit + forecast per window, the work a Banach layer does on its
/// DMD side).
pub fn time_dmd_branch(windows: &[Tensor3], rank: usize, horizon: usize, reps: usize) -> f64 {
    let start = Instant::now();
    for _ in 0..reps.max(1) {
        for w in windows {
            std::hint::black_box(koopman_forecast(w, rank, horizon, WINDOW_DT).ok());
        }
    }
    start.elapsed().as_secs_f64() / reps.max(1) as f64
}

/// Wall-clock seconds for `reps` passes of the convolutional path over the
/// windows (the same stack with the Koopman branch removed).
pub fn time_cnn_branch(cnn: &CnnModel, windows: &[Tensor3], reps: usize) -> f64 {
    let start = Instant::now();
    for _ in 0..reps.max(1) {
        for w in windows {
            std::hint::black_box(cnn_forward(cnn, w).ok());
        }
    }
    start.elapsed().as_secs_f64() / reps.max(1) as f64
}

#[derive(Debug, Clone, Copy)]
pub struct TimingBench {
    pub dmd_seconds: f64,
    pub cnn_seconds: f64,
    /// dmd_seconds / cnn_seconds; hardware-dependent, reported not asserted.
    pub ratio: f64,
}

/// Times the two branches of a hybrid model in isolation over the same
/// windows.
pub fn timing_bench(model: &BnoModel, windows: &[Tensor3], reps: usize) -> TimingBench {
    let first = &model.layers[0];
    let dmd_seconds = time_dmd_branch(windows, first.dmd_rank, first.dmd_horizon, reps);
    let cnn = transfer_bno_to_cnn(model);
    let cnn_seconds = time_cnn_branch(&cnn, windows, reps);
    TimingBench { dmd_seconds, cnn_seconds, ratio: dmd_seconds / cnn_seconds }
}

/// Comparison table as CSV: one row per model and resolution.
pub fn report_csv(rows: &[EvalReport]) -> String {
    let mut s = String::from("model,resolution,train_mse,val_mse,gap\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{}x{},{},{},{}",
            r.model, r.resolution.0, r.resolution.1, r.train_mse, r.val_mse, r.gap
        );
    }
    s
}

/// Comparison table as aligned plain text, timings included.
pub fn report_table(rows: &[EvalReport]) -> String {
    let headers = ["model", "resolution", "train_mse", "val_mse", "gap", "dmd_s", "cnn_s"];
    let mut cells: Vec<Vec<String>> = vec![headers.iter().map(|h| h.to_string()).collect()];
    for r in rows {
        cells.push(vec![
            r.model.clone(),
            format!("{}x{}", r.resolution.0, r.resolution.1),
            format!("{:.6e}", r.train_mse),
            format!("{:.6e}", r.val_mse),
            format!("{:.6e}", r.gap),
            format!("{:.3e}", r.dmd_seconds),
            format!("{:.3e}", r.cnn_seconds),
        ]);
    }
    let widths: Vec<usize> = (0..headers.len())
        .map(|c| cells.iter().map(|row| row[c].len()).max().unwrap())
        .collect();
    let mut s = String::new();
    for row in &cells {
        let line: Vec<String> =
            row.iter().zip(widths.iter()).map(|(v, w)| format!("{v:>w$}")).collect();
        let _ = writeln!(s, "{}", line.join("  "));
    }
    s
}

/// Loss history as CSV for external plotting.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_mse,val_mse\n");
    for r in history {
        let _ = writeln!(s, "{},{},{}", r.epoch, r.train_mse, r.val_mse);
    }
    s
}
