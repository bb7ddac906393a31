//! The seven subcommands. Every command validates its configuration fully
//! before touching the output directory, so a bad config never leaves
//! partial output behind.

use crate::config::RunConfig;
use crate::error::CliError;
use bno_core::data::io::{load_field, save_field};
use bno_core::data::synth::{exact_discrete_eigenvalues, parse_mode_list, synth_generate, SynthSpec};
use bno_core::data::{
    build_windows, zscore_apply, zscore_fit_apply, FieldSeries, WindowSpec,
};
use bno_core::dmd::{dmd_fit, dmd_reconstruct, eigenvalue_csv, SnapshotMatrix, DEFAULT_REL_CUTOFF};
use bno_core::eval::{
    field_sha256, history_csv, mean_at, one_step_predict, report_csv, report_table,
    rollout_against_dataset, superres_eval, DmdBaseline, EvalReport, Forecaster,
};
use bno_core::linalg::MatR;
use bno_core::model::checkpoint::{load_checkpoint, save_checkpoint, AnyModel};
use bno_core::model::{transfer_bno_to_cnn, transfer_cnn_to_bno, BanachLayer, BnoModel, ModelMeta};
use bno_core::train::{train_model, TrainOutcome, TrainSettings};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// What `train` leaves behind for `report` to aggregate.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub model_kind: String,
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub dt: f64,
    pub window: WindowSpec,
    pub split_fraction: f64,
    pub seed: u64,
    pub epochs: usize,
    pub steps: usize,
    pub dmd_fallbacks: usize,
    pub final_train_mse: Option<f64>,
    pub final_val_mse: Option<f64>,
    pub gap: Option<f64>,
    pub data_sha256: String,
    pub checkpoint: String,
    pub history: String,
}

fn synth_spec(cfg: &RunConfig) -> Result<SynthSpec, CliError> {
    let spec = SynthSpec {
        modes: parse_mode_list(&cfg.synth_modes)?,
        epsilon: cfg.synth_epsilon,
    };
    spec.validate()?;
    Ok(spec)
}

/// Loads the configured field file, or synthesizes one when no path is
/// set. The description names the source in logs and printouts.
fn load_or_synth(cfg: &RunConfig) -> Result<(FieldSeries, String), CliError> {
    match &cfg.data {
        Some(path) => {
            let field = load_field(path)?;
            Ok((field, path.display().to_string()))
        }
        None => {
            let spec = synth_spec(cfg)?;
            let field = synth_generate(
                &spec,
                cfg.synth_nx,
                cfg.synth_ny,
                cfg.synth_nt,
                cfg.synth_dt,
                cfg.seed,
            )?;
            Ok((field, format!("synthetic(seed = {})", cfg.seed)))
        }
    }
}

fn window_spec(cfg: &RunConfig) -> WindowSpec {
    WindowSpec { n: cfg.n, k: cfg.k, m: cfg.m, s: cfg.s }
}

fn write_text(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn required_model(cfg: &RunConfig, cmd: &str) -> Result<PathBuf, CliError> {
    cfg.model
        .clone()
        .ok_or_else(|| CliError::usage(format!("{cmd} needs a checkpoint: pass --model PATH")))
}

/// Synthesizes a field from the generator spec and writes it as an FLD1
/// container, printing the dimensions and the generator's exact
/// per-snapshot eigenvalues.
pub fn cmd_generate(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let spec = synth_spec(cfg)?;
    let field = synth_generate(
        &spec,
        cfg.synth_nx,
        cfg.synth_ny,
        cfg.synth_nt,
        cfg.synth_dt,
        cfg.seed,
    )?;
    fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("field.fld");
    save_field(&path, &field)?;
    println!(
        "wrote {} ({}x{} grid, {} snapshots, dt = {})",
        path.display(),
        field.nx,
        field.ny,
        field.nt,
        field.dt
    );
    println!("generator eigenvalues (per snapshot step):");
    for (i, l) in exact_discrete_eigenvalues(&spec, cfg.synth_dt).iter().enumerate() {
        println!(
            "  lambda[{i}] = {:+.12} {:+.12}i  |lambda| = {:.12}",
            l.re,
            l.im,
            l.norm()
        );
    }
    Ok(())
}

/// Fits a DMD of the configured rank to the full series and writes the
/// eigenvalue table, the mode matrix, and a reconstruction-error rank
/// sweep.
pub fn cmd_dmd(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let (field, src) = load_or_synth(cfg)?;
    let snaps = SnapshotMatrix::new(
        MatR {
            rows: field.nx * field.ny,
            cols: field.nt,
            data: field.values.clone(),
        },
        field.dt,
    )?;
    let model = dmd_fit(&snaps, cfg.rank, DEFAULT_REL_CUTOFF)?;

    fs::create_dir_all(&cfg.out)?;
    write_text(&cfg.out.join("eigs.csv"), &eigenvalue_csv(&model))?;

    let mut modes = String::from("point");
    for j in 0..model.rank {
        let _ = write!(modes, ",mode{j}_re,mode{j}_im");
    }
    modes.push('\n');
    for p in 0..model.modes.rows {
        let _ = write!(modes, "{p}");
        for j in 0..model.rank {
            let v = model.modes.get(p, j);
            let _ = write!(modes, ",{},{}", v.re, v.im);
        }
        modes.push('\n');
    }
    write_text(&cfg.out.join("modes.csv"), &modes)?;

    let eval_times: Vec<f64> = (0..field.nt).map(|t| t as f64 * field.dt).collect();
    let norm = field.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut sweep = String::from("rank,rel_error\n");
    let max_r = cfg.rank.min(field.nt - 1);
    for r in 1..=max_r {
        let sub = dmd_fit(&snaps, r, DEFAULT_REL_CUTOFF)?;
        let recon = dmd_reconstruct(&sub, &eval_times)?;
        let err = recon
            .values
            .data
            .iter()
            .zip(field.values.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let rel = if norm > 0.0 { err / norm } else { err };
        let _ = writeln!(sweep, "{r},{rel}");
    }
    write_text(&cfg.out.join("rank_sweep.csv"), &sweep)?;

    println!("fitted rank {} DMD on {src} ({} points, {} snapshots)", model.rank, field.nx * field.ny, field.nt);
    for j in 0..model.rank.min(8) {
        let l = model.eig_discrete[j];
        println!(
            "  lambda[{j}] = {:+.9} {:+.9}i  |lambda| = {:.9}",
            l.re,
            l.im,
            l.norm()
        );
    }
    if model.rank > 8 {
        println!("  ... {} more (see eigs.csv)", model.rank - 8);
    }
    Ok(())
}

/// Builds the seeded initial model. The CNN baseline shares the hybrid
/// model's initialization so comparisons start from identical weights.
fn init_model(cfg: &RunConfig, field: &FieldSeries, w: WindowSpec) -> Result<BnoModel, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut layers = Vec::with_capacity(cfg.layers);
    for _ in 0..cfg.layers {
        layers.push(BanachLayer::new(cfg.kernel, &cfg.filters, cfg.rank, cfg.s, &mut rng)?);
    }
    Ok(BnoModel {
        layers,
        norm_stats: bno_core::data::NormStats { mean: 0.0, std: 1.0 },
        window: w,
        meta: ModelMeta {
            seed: cfg.seed,
            trained_nx: field.nx,
            trained_ny: field.ny,
            stop_gradient_exact: cfg.layers == 1,
        },
    })
}

/// Normalizes, windows, trains the configured model kind, and writes
/// checkpoint.bno, history.csv, and summary.json. With epochs = 0 the
/// initialized weights are checkpointed and the history is empty.
pub fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let (field, src) = load_or_synth(cfg)?;
    let (normalized, stats) = zscore_fit_apply(&field)?;
    let w = window_spec(cfg);
    w.validate(field.nt)?;
    let ds = build_windows(&normalized, &w, cfg.split_fraction)?;
    log::info!(
        "training on {src}: {} windows ({} train / {} val) of {} points x {} snapshots",
        ds.inputs.len(),
        ds.train_idx.len(),
        ds.val_idx.len(),
        ds.nx * ds.ny,
        w.n
    );

    let mut bno = init_model(cfg, &field, w)?;
    bno.norm_stats = stats;

    let outcome: Option<TrainOutcome>;
    let any = if cfg.model_kind == "cnn" {
        let mut m = transfer_bno_to_cnn(&bno);
        outcome = if cfg.epochs > 0 {
            Some(train_model(&mut m, &ds, &train_settings(cfg)?)?)
        } else {
            None
        };
        AnyModel::Cnn(m)
    } else {
        let mut m = bno;
        outcome = if cfg.epochs > 0 {
            Some(train_model(&mut m, &ds, &train_settings(cfg)?)?)
        } else {
            None
        };
        AnyModel::Bno(m)
    };

    fs::create_dir_all(&cfg.out)?;
    let ck = cfg.out.join("checkpoint.bno");
    save_checkpoint(&ck, &any)?;
    let history = outcome.as_ref().map(|o| o.history.clone()).unwrap_or_default();
    write_text(&cfg.out.join("history.csv"), &history_csv(&history))?;

    let summary = RunSummary {
        model_kind: cfg.model_kind.clone(),
        nx: field.nx,
        ny: field.ny,
        nt: field.nt,
        dt: field.dt,
        window: w,
        split_fraction: cfg.split_fraction,
        seed: cfg.seed,
        epochs: cfg.epochs,
        steps: outcome.as_ref().map_or(0, |o| o.steps),
        dmd_fallbacks: outcome.as_ref().map_or(0, |o| o.dmd_fallbacks),
        final_train_mse: outcome.as_ref().map(|o| o.final_train_mse()),
        final_val_mse: outcome.as_ref().map(|o| o.final_val_mse()),
        gap: outcome.as_ref().map(|o| o.overfit_gap()),
        data_sha256: field_sha256(&field),
        checkpoint: "checkpoint.bno".into(),
        history: "history.csv".into(),
    };
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::Io(format!("summary serialization: {e}")))?;
    write_text(&cfg.out.join("summary.json"), &text)?;

    match &outcome {
        Some(o) => println!(
            "trained {} for {} steps: train MSE {:.6e}, val MSE {:.6e} (gap {:.3e}, {} koopman fallbacks)",
            cfg.model_kind,
            o.steps,
            o.final_train_mse(),
            o.final_val_mse(),
            o.overfit_gap(),
            o.dmd_fallbacks
        ),
        None => println!("wrote initialized {} checkpoint (epochs = 0, no training)", cfg.model_kind),
    }
    println!("outputs in {}", cfg.out.display());
    Ok(())
}

fn train_settings(cfg: &RunConfig) -> Result<TrainSettings, CliError> {
    Ok(TrainSettings {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        schedule: cfg.schedule()?,
        seed: cfg.seed,
        threads: cfg.threads,
        max_steps: cfg.max_steps,
    })
}

/// Prepares evaluation windows for a loaded checkpoint: the data is
/// normalized with the model's stored statistics and windowed with the
/// model's stored layout, so numbers are comparable with training.
fn eval_dataset(
    any: &AnyModel,
    field: &FieldSeries,
    split_fraction: f64,
) -> Result<bno_core::data::Dataset, CliError> {
    let normalized = zscore_apply(field, &any.norm_stats());
    let w = any.window();
    w.validate(field.nt)?;
    Ok(build_windows(&normalized, &w, split_fraction)?)
}

/// One-step prediction over every window; writes per_window_mse.csv and
/// prints the split means.
pub fn cmd_predict(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let model_path = required_model(cfg, "predict")?;
    let any = load_checkpoint(&model_path)?;
    let (field, src) = load_or_synth(cfg)?;
    let ds = eval_dataset(&any, &field, cfg.split_fraction)?;
    let mses = one_step_predict(&any, &ds.inputs, &ds.labels)?;

    fs::create_dir_all(&cfg.out)?;
    let n_train = ds.train_idx.len();
    let mut csv = String::from("window,split,mse\n");
    for (i, mse) in mses.iter().enumerate() {
        let split = if i < n_train { "train" } else { "val" };
        let _ = writeln!(csv, "{i},{split},{mse}");
    }
    write_text(&cfg.out.join("per_window_mse.csv"), &csv)?;

    println!(
        "{} one-step on {src}: train MSE {:.6e} ({} windows), val MSE {:.6e} ({} windows)",
        any.kind(),
        mean_at(&mses, &ds.train_idx),
        ds.train_idx.len(),
        mean_at(&mses, &ds.val_idx),
        ds.val_idx.len()
    );
    Ok(())
}

/// Autoregressive rollout from a chosen window, against either a loaded
/// checkpoint or the pure-DMD baseline.
pub fn cmd_rollout(
    cfg: &RunConfig,
    start: usize,
    steps: usize,
    dmd_baseline: bool,
) -> Result<(), CliError> {
    cfg.validate()?;
    if steps == 0 {
        return Err(CliError::usage("rollout needs --steps >= 1".to_string()));
    }
    let (field, src) = load_or_synth(cfg)?;

    let (forecaster, ds): (Box<dyn Forecaster>, _) = if dmd_baseline {
        let (normalized, _) = zscore_fit_apply(&field)?;
        let w = window_spec(cfg);
        w.validate(field.nt)?;
        let ds = build_windows(&normalized, &w, cfg.split_fraction)?;
        (Box::new(DmdBaseline { rank: cfg.rank, horizon: w.s }), ds)
    } else {
        let model_path = cfg.model.clone().ok_or_else(|| {
            CliError::usage("rollout needs --model PATH (or --dmd-baseline)".to_string())
        })?;
        let any = load_checkpoint(&model_path)?;
        let ds = eval_dataset(&any, &field, cfg.split_fraction)?;
        (Box::new(any), ds)
    };

    let result = rollout_against_dataset(&*forecaster, &ds, start, steps)?;

    fs::create_dir_all(&cfg.out)?;
    let mut csv = String::from("step,mse,diverged\n");
    for (j, mse) in result.per_step_mse.iter().enumerate() {
        let diverged = (result.diverged_at == Some(j + 1)) as u8;
        let _ = writeln!(csv, "{},{},{}", j + 1, mse, diverged);
    }
    write_text(&cfg.out.join("rollout.csv"), &csv)?;

    println!(
        "{} rollout on {src} from window {start}: {} of {steps} steps",
        forecaster.tag(),
        result.per_step_mse.len()
    );
    for (j, mse) in result.per_step_mse.iter().enumerate() {
        println!("  step {:>2}: mse {:.6e}", j + 1, mse);
    }
    match result.diverged_at {
        Some(at) => println!("diverged at step {at}"),
        None => println!("no divergence"),
    }
    Ok(())
}

/// Zero-shot evaluation at the data's resolution; with a second
/// checkpoint of the opposite kind, both cross-architecture transfer
/// directions are evaluated too.
pub fn cmd_superres(cfg: &RunConfig, transfer: Option<&Path>) -> Result<(), CliError> {
    cfg.validate()?;
    let model_path = required_model(cfg, "superres")?;
    let primary = load_checkpoint(&model_path)?;
    let (field, src) = load_or_synth(cfg)?;

    let mut rows =
        vec![superres_eval(&primary, &field, &primary.window(), cfg.split_fraction, f64::NAN)?];

    if let Some(tp) = transfer {
        let secondary = load_checkpoint(tp)?;
        rows.push(superres_eval(
            &secondary,
            &field,
            &secondary.window(),
            cfg.split_fraction,
            f64::NAN,
        )?);
        let (bno, cnn) = match (&primary, &secondary) {
            (AnyModel::Bno(b), AnyModel::Cnn(c)) => (b, c),
            (AnyModel::Cnn(c), AnyModel::Bno(b)) => (b, c),
            _ => {
                return Err(CliError::usage(
                    "transfer needs one bno and one cnn checkpoint (same kind given twice)"
                        .to_string(),
                ))
            }
        };
        let b2c = AnyModel::Cnn(transfer_bno_to_cnn(bno));
        let mut row = superres_eval(&b2c, &field, &bno.window, cfg.split_fraction, f64::NAN)?;
        row.model = "bno->cnn".into();
        rows.push(row);
        let first = &bno.layers[0];
        let c2b = AnyModel::Bno(transfer_cnn_to_bno(cnn, first.dmd_rank, first.dmd_horizon));
        let mut row = superres_eval(&c2b, &field, &cnn.window, cfg.split_fraction, f64::NAN)?;
        row.model = "cnn->bno".into();
        rows.push(row);
    }

    fs::create_dir_all(&cfg.out)?;
    write_text(&cfg.out.join("superres.csv"), &report_csv(&rows))?;
    write_text(&cfg.out.join("superres.txt"), &report_table(&rows))?;
    println!("zero-shot evaluation on {src} at {}x{}:", field.nx, field.ny);
    print!("{}", report_table(&rows));
    Ok(())
}

/// Merges training summaries into one comparison table (CSV and aligned
/// text).
pub fn cmd_report(cfg: &RunConfig, runs: &[PathBuf]) -> Result<(), CliError> {
    if runs.is_empty() {
        return Err(CliError::usage("report needs --runs DIR[,DIR...]".to_string()));
    }
    let mut rows = Vec::with_capacity(runs.len());
    for dir in runs {
        let path = dir.join("summary.json");
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let s: RunSummary = serde_json::from_str(&text)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        rows.push(EvalReport {
            model: s.model_kind,
            resolution: (s.nx, s.ny),
            train_mse: s.final_train_mse.unwrap_or(f64::NAN),
            val_mse: s.final_val_mse.unwrap_or(f64::NAN),
            gap: s.gap.unwrap_or(f64::NAN),
            dmd_seconds: f64::NAN,
            cnn_seconds: f64::NAN,
            input_sha256: s.data_sha256,
        });
    }
    fs::create_dir_all(&cfg.out)?;
    write_text(&cfg.out.join("report.csv"), &report_csv(&rows))?;
    write_text(&cfg.out.join("report.txt"), &report_table(&rows))?;
    print!("{}", report_table(&rows));
    Ok(())
}
