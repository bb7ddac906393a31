//! Field containers, normalization, pooling, and sliding-window dataset
//! construction.
//!
//! A [`FieldSeries`] stores a scalar field on an nx-by-ny grid over nt
//! snapshots. Datasets are built by sliding a window of n snapshots with a
//! temporal stride multiplier k across the series; labels are the same
//! windows shifted s window steps forward, so `label(i, j) == input(i+s, j)`
//! by construction.

pub mod io;
pub mod synth;

use crate::neural::Tensor3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("field is constant; Z-score normalization is undefined")]
    ConstantField,
    #[error("grid {nx}x{ny} is not divisible by pooling factor {factor}")]
    NotDivisible { nx: usize, ny: usize, factor: usize },
    #[error("window spec needs {needed} snapshots but the series has {available}")]
    WindowOutOfRange { needed: usize, available: usize },
    #[error("bad field or generator spec: {0}")]
    BadSpec(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a field container (bad magic bytes)")]
    BadMagic,
    #[error("unreadable field container: {0}")]
    BadFormat(String),
}

/// Scalar field sampled on a regular grid: `values[(x*ny + y)*nt + t]`,
/// time fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl FieldSeries {
    pub fn new(nx: usize, ny: usize, nt: usize, dt: f64, values: Vec<f64>) -> Result<Self, DataError> {
        if nx == 0 || ny == 0 || nt == 0 {
            return Err(DataError::BadSpec(format!("empty grid {nx}x{ny}x{nt}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(DataError::BadSpec(format!("time step must be positive, got {dt}")));
        }
        if values.len() != nx * ny * nt {
            return Err(DataError::BadSpec(format!(
                "value count {} != {nx}*{ny}*{nt}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DataError::BadSpec("non-finite field value".into()));
        }
        Ok(FieldSeries { nx, ny, nt, dt, values })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, t: usize) -> f64 {
        self.values[(x * self.ny + y) * self.nt + t]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, t: usize, v: f64) {
        self.values[(x * self.ny + y) * self.nt + t] = v;
    }

    pub fn n_space(&self) -> usize {
        self.nx * self.ny
    }

    /// One snapshot as a flattened column (index x*ny + y).
    pub fn snapshot(&self, t: usize) -> Vec<f64> {
        (0..self.n_space()).map(|p| self.values[p * self.nt + t]).collect()
    }
}

/// Global normalization statistics retained for denormalization and for
/// applying training-set statistics to other resolutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

/// Z-score normalization: subtracts the global mean and divides by the
/// global standard deviation (the population estimator, so the normalized
/// field measures back to exactly mean 0 and std 1 under that estimator).
pub fn zscore_fit_apply(f: &FieldSeries) -> Result<(FieldSeries, NormStats), DataError> {
    let n = f.values.len() as f64;
    let mean = f.values.iter().sum::<f64>() / n;
    let var = f.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 0.0) {
        return Err(DataError::ConstantField);
    }
    let stats = NormStats { mean, std };
    Ok((zscore_apply(f, &stats), stats))
}

/// Applies existing statistics (for example the training resolution's) to
/// a field.
pub fn zscore_apply(f: &FieldSeries, stats: &NormStats) -> FieldSeries {
    let values = f.values.iter().map(|v| (v - stats.mean) / stats.std).collect();
    FieldSeries { nx: f.nx, ny: f.ny, nt: f.nt, dt: f.dt, values }
}

/// Undoes [`zscore_apply`].
pub fn zscore_invert(f: &FieldSeries, stats: &NormStats) -> FieldSeries {
    let values = f.values.iter().map(|v| v * stats.std + stats.mean).collect();
    FieldSeries { nx: f.nx, ny: f.ny, nt: f.nt, dt: f.dt, values }
}

/// Downsamples by averaging factor-by-factor blocks, per snapshot.
pub fn avg_pool(f: &FieldSeries, factor: usize) -> Result<FieldSeries, DataError> {
    if factor == 0 || f.nx % factor != 0 || f.ny % factor != 0 {
        return Err(DataError::NotDivisible { nx: f.nx, ny: f.ny, factor });
    }
    let nx = f.nx / factor;
    let ny = f.ny / factor;
    let mut values = vec![0.0; nx * ny * f.nt];
    let inv = 1.0 / (factor * factor) as f64;
    for cx in 0..nx {
        for cy in 0..ny {
            for t in 0..f.nt {
                let mut acc = 0.0;
                for ix in 0..factor {
                    for iy in 0..factor {
                        acc += f.get(cx * factor + ix, cy * factor + iy, t);
                    }
                }
                values[(cx * ny + cy) * f.nt + t] = acc * inv;
            }
        }
    }
    Ok(FieldSeries { nx, ny, nt: f.nt, dt: f.dt, values })
}

/// Sliding-window layout: windows of `n` snapshots taken every `k`
/// snapshots, `m` windows total, labels shifted `s` window steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub s: usize,
}

impl WindowSpec {
    pub fn validate(&self, nt: usize) -> Result<(), DataError> {
        if self.n < 2 || self.k < 1 || self.m < 1 {
            return Err(DataError::BadSpec(format!(
                "window spec needs n >= 2, k >= 1, m >= 1, got {self:?}"
            )));
        }
        let needed = (self.s + self.m + self.n - 1) * self.k;
        if needed > nt {
            return Err(DataError::WindowOutOfRange { needed, available: nt });
        }
        Ok(())
    }

    /// Snapshot index (0-based) of column `j` of input window `i`, both
    /// 0-based. Window i (1-based) uses snapshots {(i+j-1)*k : j = 1..n}
    /// counted from 1, which lands here at (i0 + j0 + 1)*k - 1.
    #[inline]
    pub fn t_index(&self, i0: usize, j0: usize) -> usize {
        (i0 + j0 + 1) * self.k - 1
    }
}

/// Windowed dataset with a chronological train/validation split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Vec<Tensor3>,
    pub labels: Vec<Tensor3>,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub nx: usize,
    pub ny: usize,
    /// Seconds between consecutive window columns (k times the field dt).
    pub window_dt: f64,
    pub window: WindowSpec,
}

/// Cuts the series into input/label window pairs and splits the first
/// `round(m * split_fraction)` windows into the training set, the rest into
/// validation (chronological order).
pub fn build_windows(
    f: &FieldSeries,
    w: &WindowSpec,
    split_fraction: f64,
) -> Result<Dataset, DataError> {
    w.validate(f.nt)?;
    if !(0.0..=1.0).contains(&split_fraction) {
        return Err(DataError::BadSpec(format!(
            "split fraction must be in [0, 1], got {split_fraction}"
        )));
    }
    let n_space = f.n_space();
    let window_at = |start_i0: usize| -> Tensor3 {
        let mut t3 = Tensor3::zeros(n_space, w.n, 1);
        for j0 in 0..w.n {
            let t = w.t_index(start_i0, j0);
            for p in 0..n_space {
                t3.data[p * w.n + j0] = f.values[p * f.nt + t];
            }
        }
        t3
    };
    let mut inputs = Vec::with_capacity(w.m);
    let mut labels = Vec::with_capacity(w.m);
    for i0 in 0..w.m {
        inputs.push(window_at(i0));
        labels.push(window_at(i0 + w.s));
    }
    let n_train = ((w.m as f64) * split_fraction).round() as usize;
    let n_train = n_train.min(w.m);
    Ok(Dataset {
        inputs,
        labels,
        train_idx: (0..n_train).collect(),
        val_idx: (n_train..w.m).collect(),
        nx: f.nx,
        ny: f.ny,
        window_dt: f.dt * w.k as f64,
        window: w.clone(),
    })
}
