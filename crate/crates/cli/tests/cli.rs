//! End-to-end tests driving the compiled binary: every subcommand, the
//! exit-code contract, and bit-reproducibility of file outputs.

use bno_core::data::io::{load_field, save_field};
use bno_core::data::synth::{exact_discrete_eigenvalues, parse_mode_list, SynthSpec};
use bno_core::data::FieldSeries;
use num_complex::Complex64;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_bno")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary should spawn")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process should exit normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn assert_ok(out: &Output) {
    assert_eq!(code(out), 0, "command failed: {}", stderr(out));
}

/// Small synthetic problem shared by the training-based tests: 8x4 grid,
/// 40 snapshots, 20 windows of 6 (one epoch is two optimizer steps).
fn tiny_train_args<'a>(out_dir: &'a str, kind: &'a str, seed: &'a str, epochs: &'a str) -> Vec<&'a str> {
    vec![
        "train",
        "--synth-nx", "8",
        "--synth-ny", "4",
        "--synth-nt", "40",
        "--n", "6",
        "--k", "1",
        "--m", "20",
        "--rank", "3",
        "--filters", "4,4",
        "--kernel", "3",
        "--epochs", epochs,
        "--model-kind", kind,
        "--seed", seed,
        "--out", out_dir,
    ]
}

fn tiny_eval_args<'a>(cmd: &'a str, model: &'a str, out_dir: &'a str, seed: &'a str) -> Vec<&'a str> {
    vec![
        cmd,
        "--model", model,
        "--synth-nx", "8",
        "--synth-ny", "4",
        "--synth-nt", "40",
        "--seed", seed,
        "--out", out_dir,
    ]
}

fn path_str(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn generate_writes_a_loadable_reproducible_field() {
    let tmp = tempfile::tempdir().unwrap();
    let a = path_str(tmp.path(), "a");
    let b = path_str(tmp.path(), "b");
    let c = path_str(tmp.path(), "c");

    assert_ok(&run(&["generate", "--synth-nt", "30", "--seed", "5", "--out", &a]));
    assert_ok(&run(&["generate", "--synth-nt", "30", "--seed", "5", "--out", &b]));
    assert_ok(&run(&["generate", "--synth-nt", "30", "--seed", "6", "--out", &c]));

    let field = load_field(&tmp.path().join("a/field.fld")).unwrap();
    assert_eq!((field.nx, field.ny, field.nt), (32, 16, 30));
    assert_eq!(field.dt, 0.1);

    let bytes_a = fs::read(tmp.path().join("a/field.fld")).unwrap();
    let bytes_b = fs::read(tmp.path().join("b/field.fld")).unwrap();
    let bytes_c = fs::read(tmp.path().join("c/field.fld")).unwrap();
    assert_eq!(bytes_a, bytes_b, "same seed should reproduce the same bytes");
    assert_ne!(bytes_a, bytes_c, "a different seed should change the field");
}

#[test]
fn generated_eigenvalues_match_the_dmd_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = path_str(tmp.path(), "gen");
    let fit = path_str(tmp.path(), "fit");
    let modes = "0,2.0,1,0,1,0;-0.15,4.5,0.6,0.3,2,1";

    assert_ok(&run(&[
        "generate",
        "--synth-nt", "60",
        "--synth-epsilon", "0",
        "--synth-modes", modes,
        "--out", &gen,
    ]));
    let field = path_str(&tmp.path().join("gen"), "field.fld");
    assert_ok(&run(&["dmd", "--data", &field, "--rank", "4", "--out", &fit]));

    let csv = fs::read_to_string(tmp.path().join("fit/eigs.csv")).unwrap();
    let fitted: Vec<Complex64> = csv
        .lines()
        .skip(1)
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            Complex64::new(cols[1].parse().unwrap(), cols[2].parse().unwrap())
        })
        .collect();
    assert_eq!(fitted.len(), 4);

    let spec = SynthSpec { modes: parse_mode_list(modes).unwrap(), epsilon: 0.0 };
    for expected in exact_discrete_eigenvalues(&spec, 0.1) {
        let nearest = fitted.iter().map(|f| (f - expected).norm()).fold(f64::INFINITY, f64::min);
        assert!(
            nearest <= 1e-6,
            "eigenvalue {expected} recovered only to {nearest:.3e} through the f32 container"
        );
    }
}

#[test]
fn oversized_rank_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path_str(tmp.path(), "out");
    let result = run(&["dmd", "--synth-nt", "20", "--rank", "50", "--out", &out]);
    assert_eq!(code(&result), 1, "stderr: {}", stderr(&result));
    assert!(stderr(&result).contains("rank"), "stderr: {}", stderr(&result));
}

#[test]
fn degenerate_data_is_a_numerical_error() {
    let tmp = tempfile::tempdir().unwrap();
    let zeros = FieldSeries::new(4, 2, 8, 0.5, vec![0.0; 4 * 2 * 8]).unwrap();
    let field = tmp.path().join("zeros.fld");
    save_field(&field, &zeros).unwrap();
    let out = path_str(tmp.path(), "out");
    let result = run(&["dmd", "--data", field.to_str().unwrap(), "--rank", "2", "--out", &out]);
    assert_eq!(code(&result), 2, "stderr: {}", stderr(&result));
}

#[test]
fn training_writes_reproducible_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let a = path_str(tmp.path(), "a");
    let b = path_str(tmp.path(), "b");
    assert_ok(&run(&tiny_train_args(&a, "bno", "11", "1")));
    assert_ok(&run(&tiny_train_args(&b, "bno", "11", "1")));

    for name in ["checkpoint.bno", "history.csv", "summary.json"] {
        let bytes_a = fs::read(tmp.path().join("a").join(name)).unwrap();
        let bytes_b = fs::read(tmp.path().join("b").join(name)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{name} should be bit-identical across reruns");
    }

    let history = fs::read_to_string(tmp.path().join("a/history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_mse,val_mse\n"));
    assert_eq!(history.lines().count(), 2, "one epoch should log one row");
}

#[test]
fn zero_epoch_training_checkpoints_initial_weights() {
    let tmp = tempfile::tempdir().unwrap();
    let train_out = path_str(tmp.path(), "run");
    assert_ok(&run(&tiny_train_args(&train_out, "bno", "2", "0")));

    let history = fs::read_to_string(tmp.path().join("run/history.csv")).unwrap();
    assert_eq!(history, "epoch,train_mse,val_mse\n");
    let summary = fs::read_to_string(tmp.path().join("run/summary.json")).unwrap();
    assert!(summary.contains("\"steps\": 0"));
    assert!(summary.contains("\"final_train_mse\": null"));

    // The untrained checkpoint must still load and predict.
    let ck = path_str(&tmp.path().join("run"), "checkpoint.bno");
    let pred_out = path_str(tmp.path(), "pred");
    assert_ok(&run(&tiny_eval_args("predict", &ck, &pred_out, "2")));
}

#[test]
fn prediction_and_single_step_rollout_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let train_out = path_str(tmp.path(), "run");
    assert_ok(&run(&tiny_train_args(&train_out, "bno", "7", "1")));
    let ck = path_str(&tmp.path().join("run"), "checkpoint.bno");

    let pred_out = path_str(tmp.path(), "pred");
    assert_ok(&run(&tiny_eval_args("predict", &ck, &pred_out, "7")));
    let roll_out = path_str(tmp.path(), "roll");
    let mut roll = tiny_eval_args("rollout", &ck, &roll_out, "7");
    roll.extend_from_slice(&["--start", "0", "--steps", "1"]);
    assert_ok(&run(&roll));

    let pred_csv = fs::read_to_string(tmp.path().join("pred/per_window_mse.csv")).unwrap();
    let window0_mse = pred_csv.lines().nth(1).unwrap().split(',').nth(2).unwrap().to_string();
    let roll_csv = fs::read_to_string(tmp.path().join("roll/rollout.csv")).unwrap();
    let step1 = roll_csv.lines().nth(1).unwrap();
    assert_eq!(
        step1,
        format!("1,{window0_mse},0"),
        "a one-step rollout from window 0 is exactly the window-0 prediction"
    );
}

#[test]
fn dmd_baseline_rollout_needs_no_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path_str(tmp.path(), "roll");
    let result = run(&[
        "rollout",
        "--dmd-baseline",
        "--synth-nx", "8",
        "--synth-ny", "4",
        "--synth-nt", "40",
        "--n", "6",
        "--k", "1",
        "--m", "20",
        "--rank", "3",
        "--steps", "3",
        "--out", &out,
    ]);
    assert_ok(&result);
    let csv = fs::read_to_string(tmp.path().join("roll/rollout.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4, "header plus one row per step:\n{csv}");
}

#[test]
fn equal_resolution_superres_reproduces_validation_mse() {
    let tmp = tempfile::tempdir().unwrap();
    let train_out = path_str(tmp.path(), "run");
    assert_ok(&run(&tiny_train_args(&train_out, "bno", "13", "1")));
    let ck = path_str(&tmp.path().join("run"), "checkpoint.bno");

    let pred_out = path_str(tmp.path(), "pred");
    assert_ok(&run(&tiny_eval_args("predict", &ck, &pred_out, "13")));
    let sup_out = path_str(tmp.path(), "sup");
    assert_ok(&run(&tiny_eval_args("superres", &ck, &sup_out, "13")));

    // Validation mean recomputed from the per-window table.
    let pred_csv = fs::read_to_string(tmp.path().join("pred/per_window_mse.csv")).unwrap();
    let val: Vec<f64> = pred_csv
        .lines()
        .skip(1)
        .filter(|l| l.contains(",val,"))
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    let val_mean = val.iter().sum::<f64>() / val.len() as f64;

    let sup_csv = fs::read_to_string(tmp.path().join("sup/superres.csv")).unwrap();
    let row = sup_csv.lines().nth(1).unwrap();
    let cols: Vec<&str> = row.split(',').collect();
    assert_eq!(cols[0], "bno");
    assert_eq!(cols[1], "8x4");
    let sup_val: f64 = cols[3].parse().unwrap();
    assert!(
        (sup_val - val_mean).abs() <= 1e-12 * val_mean.abs().max(1.0),
        "superres at the training resolution gave {sup_val}, prediction gave {val_mean}"
    );
}

#[test]
fn report_matches_the_golden_table() {
    let tmp = tempfile::tempdir().unwrap();
    let bno_out = path_str(tmp.path(), "bno_run");
    let cnn_out = path_str(tmp.path(), "cnn_run");
    assert_ok(&run(&tiny_train_args(&bno_out, "bno", "11", "1")));
    assert_ok(&run(&tiny_train_args(&cnn_out, "cnn", "11", "1")));

    let rep_out = path_str(tmp.path(), "rep");
    let runs = format!("{bno_out},{cnn_out}");
    assert_ok(&run(&["report", "--runs", &runs, "--out", &rep_out]));

    let produced = fs::read_to_string(tmp.path().join("rep/report.csv")).unwrap();
    let golden_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/report.csv");
    if std::env::var_os("BNO_UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(golden_path.parent().unwrap()).unwrap();
        fs::write(&golden_path, &produced).unwrap();
    }
    let golden = fs::read_to_string(&golden_path).expect("golden file (set BNO_UPDATE_GOLDEN to regenerate)");
    assert_eq!(produced, golden, "report.csv drifted from tests/golden/report.csv");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, "{\"epochz\": 3}").unwrap();
    let out = path_str(tmp.path(), "out");
    let result = run(&["generate", "--config", cfg.to_str().unwrap(), "--out", &out]);
    assert_eq!(code(&result), 1);
    assert!(stderr(&result).contains("unknown field"), "stderr: {}", stderr(&result));
}

#[test]
fn predict_without_model_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path_str(tmp.path(), "out");
    let result = run(&["predict", "--out", &out]);
    assert_eq!(code(&result), 1);
    assert!(stderr(&result).contains("--model"), "stderr: {}", stderr(&result));
}

#[test]
fn rollout_rejects_zero_steps() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path_str(tmp.path(), "out");
    let result = run(&["rollout", "--dmd-baseline", "--steps", "0", "--out", &out]);
    assert_eq!(code(&result), 1);
}

#[test]
fn missing_checkpoint_file_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path_str(tmp.path(), "out");
    let missing = path_str(tmp.path(), "nothing.bno");
    let result = run(&["predict", "--model", &missing, "--out", &out]);
    assert_eq!(code(&result), 3, "stderr: {}", stderr(&result));
}
