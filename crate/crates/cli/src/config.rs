//! Run configuration: one flat key set covering data source, windowing,
//! architecture, and training. Loaded from a JSON file (unknown keys
//! rejected), then overridden key-by-key from command-line flags.

use crate::error::CliError;
use bno_core::data::synth::parse_mode_list;
use bno_core::neural::LrSchedule;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Field container to load. When absent, commands synthesize data
    /// from the synth_* keys.
    pub data: Option<PathBuf>,
    pub synth_nx: usize,
    pub synth_ny: usize,
    pub synth_nt: usize,
    pub synth_dt: f64,
    /// Generator modes, "omega_re,omega_im,amp_re,amp_im,kx,ky" separated
    /// by ';'.
    pub synth_modes: String,
    /// Quadratic nonlinearity strength of the generator.
    pub synth_epsilon: f64,
    /// Snapshots per window.
    pub n: usize,
    /// Snapshot stride inside a window.
    pub k: usize,
    /// Number of windows.
    pub m: usize,
    /// Input-to-label shift in window steps.
    pub s: usize,
    /// Leading fraction of windows assigned to the train split.
    pub split_fraction: f64,
    /// "bno" (hybrid) or "cnn" (baseline).
    pub model_kind: String,
    /// DMD truncation rank.
    pub rank: usize,
    /// Banach layer count.
    pub layers: usize,
    /// Square kernel size (odd).
    pub kernel: usize,
    /// Branch channel widths; the last is the fusion width.
    pub filters: Vec<usize>,
    pub batch_size: usize,
    pub epochs: usize,
    /// Optimizer-step boundaries of the learning-rate schedule.
    pub lr_boundaries: Vec<usize>,
    /// One more rate than boundaries.
    pub lr_rates: Vec<f64>,
    /// Optional hard cap on optimizer steps.
    pub max_steps: Option<usize>,
    /// Gradient worker threads (1 = serial; any count gives the same bits).
    pub threads: usize,
    pub seed: u64,
    /// Output directory.
    pub out: PathBuf,
    /// Checkpoint path for predict/rollout/superres.
    pub model: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            synth_nx: 32,
            synth_ny: 16,
            synth_nt: 200,
            synth_dt: 0.1,
            synth_modes: "0,2.0,1,0,1,0;-0.15,4.5,0.6,0.3,2,1".into(),
            synth_epsilon: 0.1,
            n: 20,
            k: 2,
            m: 80,
            s: 1,
            split_fraction: 0.7,
            model_kind: "bno".into(),
            rank: 12,
            layers: 1,
            kernel: 5,
            filters: vec![16, 32, 16],
            batch_size: 10,
            epochs: 5,
            lr_boundaries: vec![1500, 2500],
            lr_rates: vec![1e-3, 1e-4, 1e-5],
            max_steps: None,
            threads: 1,
            seed: 0,
            out: PathBuf::from("out"),
            model: None,
        }
    }
}

impl RunConfig {
    /// Checks every general precondition that does not need the data
    /// loaded. Runs before any side effect.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.data.is_none() {
            if self.synth_nx == 0 || self.synth_ny == 0 || self.synth_nt < 2 {
                return Err(CliError::usage(format!(
                    "synthetic dims {}x{}x{} need nx, ny >= 1 and nt >= 2",
                    self.synth_nx, self.synth_ny, self.synth_nt
                )));
            }
            if !(self.synth_dt > 0.0) || !self.synth_dt.is_finite() {
                return Err(CliError::usage(format!("synth_dt must be positive, got {}", self.synth_dt)));
            }
            if !self.synth_epsilon.is_finite() {
                return Err(CliError::usage("synth_epsilon must be finite".to_string()));
            }
            parse_mode_list(&self.synth_modes).map_err(CliError::from)?;
        }
        if self.n < 2 || self.k == 0 || self.m == 0 {
            return Err(CliError::usage(format!(
                "window spec needs n >= 2, k >= 1, m >= 1, got n={} k={} m={}",
                self.n, self.k, self.m
            )));
        }
        if !(0.0..=1.0).contains(&self.split_fraction) {
            return Err(CliError::usage(format!(
                "split_fraction must lie in [0, 1], got {}",
                self.split_fraction
            )));
        }
        if self.model_kind != "bno" && self.model_kind != "cnn" {
            return Err(CliError::usage(format!(
                "model_kind must be \"bno\" or \"cnn\", got {:?}",
                self.model_kind
            )));
        }
        if self.rank == 0 {
            return Err(CliError::usage("rank must be at least 1".to_string()));
        }
        if self.layers == 0 {
            return Err(CliError::usage("layers must be at least 1".to_string()));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(CliError::usage(format!(
                "kernel must be odd (same padding), got {}",
                self.kernel
            )));
        }
        if self.filters.is_empty() || self.filters.iter().any(|&f| f == 0) {
            return Err(CliError::usage("filters must be a nonempty list of positive counts".to_string()));
        }
        if self.batch_size == 0 {
            return Err(CliError::usage("batch_size must be at least 1".to_string()));
        }
        if self.threads == 0 {
            return Err(CliError::usage("threads must be at least 1".to_string()));
        }
        if self.max_steps == Some(0) {
            return Err(CliError::usage("max_steps must be at least 1 when set".to_string()));
        }
        self.schedule()?;
        Ok(())
    }

    pub fn schedule(&self) -> Result<LrSchedule, CliError> {
        LrSchedule::new(self.lr_boundaries.clone(), self.lr_rates.clone()).map_err(CliError::from)
    }
}

/// Per-key command-line overrides; every config key has one. List-valued
/// keys take comma-separated values.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// JSON config file; flags override its keys.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Field container to read instead of synthesizing data.
    #[arg(long, global = true, value_name = "PATH")]
    pub data: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub synth_nx: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub synth_ny: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub synth_nt: Option<usize>,
    #[arg(long, global = true, value_name = "DT")]
    pub synth_dt: Option<f64>,
    /// Generator modes "omega_re,omega_im,amp_re,amp_im,kx,ky;..."
    #[arg(long, global = true, value_name = "MODES")]
    pub synth_modes: Option<String>,
    #[arg(long, global = true, value_name = "EPS")]
    pub synth_epsilon: Option<f64>,
    /// Snapshots per window.
    #[arg(long, global = true, value_name = "N")]
    pub n: Option<usize>,
    /// Snapshot stride inside a window.
    #[arg(long, global = true, value_name = "K")]
    pub k: Option<usize>,
    /// Number of windows.
    #[arg(long, global = true, value_name = "M")]
    pub m: Option<usize>,
    /// Input-to-label shift in window steps.
    #[arg(long, global = true, value_name = "S")]
    pub s: Option<usize>,
    #[arg(long, global = true, value_name = "FRAC")]
    pub split_fraction: Option<f64>,
    /// "bno" or "cnn".
    #[arg(long, global = true, value_name = "KIND")]
    pub model_kind: Option<String>,
    /// DMD truncation rank.
    #[arg(long, global = true, value_name = "R")]
    pub rank: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub layers: Option<usize>,
    #[arg(long, global = true, value_name = "K")]
    pub kernel: Option<usize>,
    /// Comma-separated branch widths, e.g. 16,32,16.
    #[arg(long, global = true, value_name = "LIST")]
    pub filters: Option<String>,
    #[arg(long, global = true, value_name = "N")]
    pub batch_size: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub epochs: Option<usize>,
    /// Comma-separated optimizer-step boundaries, e.g. 1500,2500.
    #[arg(long, global = true, value_name = "LIST")]
    pub lr_boundaries: Option<String>,
    /// Comma-separated rates, one more than boundaries.
    #[arg(long, global = true, value_name = "LIST")]
    pub lr_rates: Option<String>,
    #[arg(long, global = true, value_name = "N")]
    pub max_steps: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Checkpoint to load (predict, rollout, superres).
    #[arg(long, global = true, value_name = "PATH")]
    pub model: Option<PathBuf>,
}

fn parse_list<T: std::str::FromStr>(key: &str, raw: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(|chunk| {
            chunk.trim().parse::<T>().map_err(|e| {
                CliError::usage(format!("bad {key} element {:?}: {e}", chunk.trim()))
            })
        })
        .collect()
}

/// Builds the effective config: defaults, then the JSON file, then flags.
pub fn load_config(overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = match &overrides.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("config {}: {e}", path.display())))?;
            serde_json::from_str::<RunConfig>(&text)
                .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };

    let o = overrides;
    if let Some(v) = &o.data {
        cfg.data = Some(v.clone());
    }
    if let Some(v) = o.synth_nx {
        cfg.synth_nx = v;
    }
    if let Some(v) = o.synth_ny {
        cfg.synth_ny = v;
    }
    if let Some(v) = o.synth_nt {
        cfg.synth_nt = v;
    }
    if let Some(v) = o.synth_dt {
        cfg.synth_dt = v;
    }
    if let Some(v) = &o.synth_modes {
        cfg.synth_modes = v.clone();
    }
    if let Some(v) = o.synth_epsilon {
        cfg.synth_epsilon = v;
    }
    if let Some(v) = o.n {
        cfg.n = v;
    }
    if let Some(v) = o.k {
        cfg.k = v;
    }
    if let Some(v) = o.m {
        cfg.m = v;
    }
    if let Some(v) = o.s {
        cfg.s = v;
    }
    if let Some(v) = o.split_fraction {
        cfg.split_fraction = v;
    }
    if let Some(v) = &o.model_kind {
        cfg.model_kind = v.clone();
    }
    if let Some(v) = o.rank {
        cfg.rank = v;
    }
    if let Some(v) = o.layers {
        cfg.layers = v;
    }
    if let Some(v) = o.kernel {
        cfg.kernel = v;
    }
    if let Some(v) = &o.filters {
        cfg.filters = parse_list("filters", v)?;
    }
    if let Some(v) = o.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = o.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = &o.lr_boundaries {
        cfg.lr_boundaries = parse_list("lr_boundaries", v)?;
    }
    if let Some(v) = &o.lr_rates {
        cfg.lr_rates = parse_list("lr_rates", v)?;
    }
    if let Some(v) = o.max_steps {
        cfg.max_steps = Some(v);
    }
    if let Some(v) = o.threads {
        cfg.threads = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = &o.out {
        cfg.out = v.clone();
    }
    if let Some(v) = &o.model {
        cfg.model = Some(v.clone());
    }
    Ok(cfg)
}
