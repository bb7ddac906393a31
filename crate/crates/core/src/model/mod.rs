//! The Banach layer and the models built from it.
//!
//! A Banach layer runs two branches over an input window (N_x, N_t, 1):
//! a convolutional corrector producing fuse_chan channels, and a Koopman
//! branch that fits a DMD to the window itself and forecasts it
//! `dmd_horizon` window steps ahead. The forecast is broadcast across the
//! corrector channels, added, passed through relu, and collapsed back to
//! one channel by a linear head. The CNN baseline is the identical stack
//! with the Koopman branch removed.
//!
//! The Koopman branch is refit from whatever input it is given, so a
//! trained model applies unchanged at any spatial resolution: weights
//! never see the grid size, only the channel counts.
//!
//! Gradients do not flow through the DMD fit (stop-gradient). For a
//! single-layer model this is exact, because the branch consumes the raw
//! input, which depends on no parameter; for stacked layers it is an
//! approximation recorded in the model metadata.

pub mod checkpoint;

use crate::data::{NormStats, WindowSpec};
use crate::dmd::{koopman_apply, DmdError, SnapshotMatrix};
use crate::linalg::MatR;
use crate::neural::{
    conv2d_backward_from_pre, conv_pre, Activation, ConvLayer, NeuralError, Tensor3,
};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Time step used for the in-layer Koopman fit when a model consumes
/// dataset windows. Window columns are one window step apart, so time is
/// measured in window units; integer-horizon forecasts do not depend on
/// this value (the omega*t products cancel), it only fixes a convention.
pub const WINDOW_DT: f64 = 1.0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("koopman branch failed: {0}")]
    Dmd(#[from] DmdError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {found}")]
    VersionMismatch { found: u16 },
    #[error("unreadable checkpoint: {0}")]
    BadCheckpoint(String),
}

/// One hybrid layer: convolutional branch, Koopman branch configuration,
/// and the linear head that fuses them back to one channel.
#[derive(Debug, Clone)]
pub struct BanachLayer {
    pub cnn_branch: Vec<ConvLayer>,
    pub head: ConvLayer,
    pub dmd_rank: usize,
    pub dmd_horizon: usize,
    pub fuse_chan: usize,
}

impl BanachLayer {
    /// Seeded construction: `filters` lists the branch channel counts
    /// (the last one is the fusion width), all kernels are
    /// kernel-by-kernel, branch layers use relu, the head is linear.
    pub fn new(
        kernel: usize,
        filters: &[usize],
        dmd_rank: usize,
        dmd_horizon: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, ModelError> {
        if filters.is_empty() {
            return Err(ModelError::Shape("filter list must not be empty".into()));
        }
        if dmd_rank == 0 {
            return Err(ModelError::Shape("dmd rank must be at least 1".into()));
        }
        let mut cnn_branch = Vec::with_capacity(filters.len());
        let mut in_chan = 1;
        for &f in filters {
            if f == 0 {
                return Err(ModelError::Shape("zero-width filter".into()));
            }
            cnn_branch.push(ConvLayer::glorot(kernel, kernel, in_chan, f, Activation::Relu, rng)?);
            in_chan = f;
        }
        let fuse_chan = *filters.last().unwrap();
        let head = ConvLayer::glorot(kernel, kernel, fuse_chan, 1, Activation::Linear, rng)?;
        Ok(BanachLayer { cnn_branch, head, dmd_rank, dmd_horizon, fuse_chan })
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let last = self
            .cnn_branch
            .last()
            .ok_or_else(|| ModelError::Shape("empty cnn branch".into()))?;
        if last.out_chan != self.fuse_chan {
            return Err(ModelError::Shape(format!(
                "branch ends in {} channels, fusion expects {}",
                last.out_chan, self.fuse_chan
            )));
        }
        if self.head.in_chan != self.fuse_chan || self.head.out_chan != 1 {
            return Err(ModelError::Shape(format!(
                "head maps {}->{} channels, expected {}->1",
                self.head.in_chan, self.head.out_chan, self.fuse_chan
            )));
        }
        if self.cnn_branch[0].in_chan != 1 {
            return Err(ModelError::Shape("first branch layer must take 1 channel".into()));
        }
        if self.dmd_rank == 0 {
            return Err(ModelError::Shape("dmd rank must be at least 1".into()));
        }
        Ok(())
    }
}

/// Creation context kept with a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub seed: u64,
    pub trained_nx: usize,
    pub trained_ny: usize,
    /// True when the stop-gradient through the Koopman branch is exact
    /// (single-layer models).
    pub stop_gradient_exact: bool,
}

/// Full hybrid model: Banach layers applied in sequence plus the training
/// normalization and windowing context needed at inference time.
#[derive(Debug, Clone)]
pub struct BnoModel {
    pub layers: Vec<BanachLayer>,
    pub norm_stats: NormStats,
    pub window: WindowSpec,
    pub meta: ModelMeta,
}

/// One stage of the convolution-only baseline: the Banach layer stack with
/// the Koopman branch deleted (branch, fusion relu, head).
#[derive(Debug, Clone)]
pub struct CnnStage {
    pub cnn_branch: Vec<ConvLayer>,
    pub head: ConvLayer,
}

/// Convolution-only baseline model, parameter-compatible with [`BnoModel`].
#[derive(Debug, Clone)]
pub struct CnnModel {
    pub stages: Vec<CnnStage>,
    pub norm_stats: NormStats,
    pub window: WindowSpec,
    pub meta: ModelMeta,
}

impl BnoModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layers.is_empty() {
            return Err(ModelError::Shape("model needs at least one layer".into()));
        }
        if !(self.norm_stats.std > 0.0) {
            return Err(ModelError::Shape("normalization std must be positive".into()));
        }
        for l in &self.layers {
            l.validate()?;
        }
        Ok(())
    }
}

/// Activations saved by one stage forward pass, enough to run the exact
/// backward pass without recomputation.
#[derive(Debug, Clone)]
pub struct StageCache {
    /// Layer input.
    pub input: Tensor3,
    /// (pre-activation, post-activation) per branch layer.
    pub cnn: Vec<(Tensor3, Tensor3)>,
    /// Koopman forecast (one channel); zeros when the fit fell back.
    pub koopman: Tensor3,
    /// True when the in-layer DMD fit failed and the Koopman contribution
    /// was replaced by zeros.
    pub fallback: bool,
    /// Pre-relu fusion sum c + broadcast(k).
    pub fused_pre: Tensor3,
    /// Post-relu fusion.
    pub fused: Tensor3,
    /// Head pre-activation (the head is linear, so this is the output).
    pub output: Tensor3,
}

/// Shape trace of one Banach layer application, for architecture
/// verification. Channel count 0 marks the reshaped 2-D matrix view.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeTrace {
    pub rows: Vec<(&'static str, (usize, usize, usize))>,
}

fn require_single_channel(u: &Tensor3) -> Result<(), ModelError> {
    if u.n_chan != 1 {
        return Err(ModelError::Shape(format!(
            "layer input must have 1 channel, got {}",
            u.n_chan
        )));
    }
    if u.n_time < 2 {
        return Err(ModelError::Shape(format!(
            "layer input needs at least 2 time columns, got {}",
            u.n_time
        )));
    }
    Ok(())
}

/// Runs the Koopman branch: reshape to (N_x, N_t), fit with the rank
/// clamped to the window capacity, forecast `horizon` window steps ahead.
/// Degenerate data and eigensolver failures yield `None` (the caller
/// substitutes zeros); anything else propagates.
///
/// Public so the trainer can hoist the fit out of the epoch loop (the
/// first layer consumes raw windows, which never change) and so branch
/// timings can be measured in isolation.
pub fn koopman_forecast(
    u: &Tensor3,
    dmd_rank: usize,
    horizon: usize,
    dt: f64,
) -> Result<Option<Tensor3>, ModelError> {
    let rank = dmd_rank.min(u.n_time - 1);
    let values = MatR { rows: u.n_space, cols: u.n_time, data: u.data.clone() };
    let snaps = match SnapshotMatrix::new(values, dt) {
        Ok(s) => s,
        Err(DmdError::InvalidSnapshot(msg)) => {
            return Err(ModelError::Dmd(DmdError::InvalidSnapshot(msg)))
        }
        Err(_) => return Ok(None),
    };
    match koopman_apply(&snaps, rank, horizon) {
        Ok(out) => {
            let mut k = Tensor3::zeros(u.n_space, u.n_time, 1);
            k.data.copy_from_slice(&out.values.data);
            Ok(Some(k))
        }
        Err(DmdError::DegenerateData) | Err(DmdError::EigFailure(_)) => Ok(None),
        Err(e) => Err(ModelError::Dmd(e)),
    }
}

/// Shared forward pass for a (branch, head) stack. `koopman` carries the
/// Koopman forecast for Banach layers and `None` for the CNN baseline;
/// the fallback flag is recorded separately by the caller.
fn stage_forward(
    cnn_branch: &[ConvLayer],
    head: &ConvLayer,
    u: &Tensor3,
    koopman: Option<Tensor3>,
    fallback: bool,
) -> Result<StageCache, ModelError> {
    let (ns, nt, _) = u.shape();
    let mut cnn = Vec::with_capacity(cnn_branch.len());
    let mut cur = u.clone();
    for layer in cnn_branch {
        let pre = conv_pre(&cur, layer)?;
        let mut post = pre.clone();
        for v in post.data.iter_mut() {
            *v = layer.activation.apply(*v);
        }
        cnn.push((pre, post.clone()));
        cur = post;
    }
    let c = &cnn.last().unwrap().1;
    let fuse_chan = c.n_chan;

    let koopman = match koopman {
        Some(k) => {
            if k.shape() != (ns, nt, 1) {
                return Err(ModelError::Shape(format!(
                    "koopman forecast shape {:?}, expected ({ns}, {nt}, 1)",
                    k.shape()
                )));
            }
            k
        }
        None => Tensor3::zeros(ns, nt, 1),
    };

    // Broadcast the single forecast channel across the fusion width, add,
    // relu.
    let mut fused_pre = c.clone();
    for p in 0..ns * nt {
        let kv = koopman.data[p];
        let row = &mut fused_pre.data[p * fuse_chan..(p + 1) * fuse_chan];
        for v in row.iter_mut() {
            *v += kv;
        }
    }
    let mut fused = fused_pre.clone();
    for v in fused.data.iter_mut() {
        *v = Activation::Relu.apply(*v);
    }

    let output = conv_pre(&fused, head)?;
    Ok(StageCache { input: u.clone(), cnn, koopman, fallback, fused_pre, fused, output })
}

/// Forward pass of one Banach layer. `koopman_override` short-circuits the
/// in-layer DMD fit with a precomputed forecast (used by the trainer,
/// where the fit of an unchanging input is loop-invariant).
pub fn banach_forward_cached(
    layer: &BanachLayer,
    u: &Tensor3,
    dt: f64,
    koopman_override: Option<&Tensor3>,
) -> Result<StageCache, ModelError> {
    require_single_channel(u)?;
    let (k, fallback) = match koopman_override {
        Some(k) => (Some(k.clone()), false),
        None => match koopman_forecast(u, layer.dmd_rank, layer.dmd_horizon, dt)? {
            Some(k) => (Some(k), false),
            None => (None, true),
        },
    };
    stage_forward(&layer.cnn_branch, &layer.head, u, k, fallback)
}

/// Output-only Banach layer forward.
pub fn banach_forward(layer: &BanachLayer, u: &Tensor3, dt: f64) -> Result<Tensor3, ModelError> {
    Ok(banach_forward_cached(layer, u, dt, None)?.output)
}

/// Forward with a recorded shape trace mirroring the architecture table:
/// every branch activation, the reshaped matrix view, the forecast, its
/// broadcast, the fusion, and the head output.
pub fn banach_forward_trace(
    layer: &BanachLayer,
    u: &Tensor3,
    dt: f64,
) -> Result<(Tensor3, ShapeTrace), ModelError> {
    let cache = banach_forward_cached(layer, u, dt, None)?;
    let (ns, nt, _) = u.shape();
    let mut rows = vec![("input", (ns, nt, 1))];
    for (i, (_, post)) in cache.cnn.iter().enumerate() {
        let label: &'static str = match i {
            0 => "cnn_1",
            1 => "cnn_2",
            2 => "cnn_3",
            _ => "cnn_n",
        };
        rows.push((label, post.shape()));
    }
    rows.push(("dmd_reshape", (ns, nt, 0)));
    rows.push(("dmd_forecast", cache.koopman.shape()));
    rows.push(("dmd_broadcast", (ns, nt, layer.fuse_chan)));
    rows.push(("fuse_add_relu", cache.fused.shape()));
    rows.push(("head", cache.output.shape()));
    Ok((cache.output, ShapeTrace { rows }))
}

/// Applies the model layers in sequence. The input feeds the first layer
/// directly (no lifting); every layer maps (N_x, N_t, 1) to itself.
pub fn bno_forward(model: &BnoModel, u0: &Tensor3, dt: f64) -> Result<Tensor3, ModelError> {
    let caches = bno_forward_cached(model, u0, dt, None)?;
    Ok(caches.into_iter().last().unwrap().output)
}

/// Cached multi-layer forward. `koopman_first` optionally substitutes the
/// first layer's forecast (later layers always refit: their inputs change
/// with the weights).
pub fn bno_forward_cached(
    model: &BnoModel,
    u0: &Tensor3,
    dt: f64,
    koopman_first: Option<&Tensor3>,
) -> Result<Vec<StageCache>, ModelError> {
    model.validate()?;
    let mut caches = Vec::with_capacity(model.layers.len());
    let mut cur = u0.clone();
    for (i, layer) in model.layers.iter().enumerate() {
        let over = if i == 0 { koopman_first } else { None };
        let cache = banach_forward_cached(layer, &cur, dt, over)?;
        cur = cache.output.clone();
        caches.push(cache);
    }
    Ok(caches)
}

/// CNN baseline forward (cached): the same stack with a zero Koopman
/// contribution at every stage.
pub fn cnn_forward_cached(model: &CnnModel, u0: &Tensor3) -> Result<Vec<StageCache>, ModelError> {
    if model.stages.is_empty() {
        return Err(ModelError::Shape("model needs at least one stage".into()));
    }
    require_single_channel(u0)?;
    let mut caches = Vec::with_capacity(model.stages.len());
    let mut cur = u0.clone();
    for stage in &model.stages {
        let cache = stage_forward(&stage.cnn_branch, &stage.head, &cur, None, false)?;
        cur = cache.output.clone();
        caches.push(cache);
    }
    Ok(caches)
}

/// Output-only CNN baseline forward.
pub fn cnn_forward(model: &CnnModel, u0: &Tensor3) -> Result<Tensor3, ModelError> {
    Ok(cnn_forward_cached(model, u0)?.into_iter().last().unwrap().output)
}

/// Backward through one stage. Returns the gradient with respect to the
/// stage input (flowing through the convolutional path only; the Koopman
/// forecast is held constant) and appends parameter gradients.
fn stage_backward(
    cnn_branch: &[ConvLayer],
    head: &ConvLayer,
    cache: &StageCache,
    grad_out: &Tensor3,
    grad_sink: &mut [f64],
) -> Result<Tensor3, ModelError> {
    // Head is linear: output == its pre-activation.
    let (mut grad_fused, gw_head, gb_head) =
        conv2d_backward_from_pre(&cache.fused, &cache.output, head, grad_out)?;
    // Relu gate of the fusion.
    for (g, p) in grad_fused.data.iter_mut().zip(cache.fused_pre.data.iter()) {
        *g *= Activation::Relu.derivative(*p);
    }
    // The broadcast add sends the same gradient into the branch output;
    // the Koopman side is frozen.
    let mut grad = grad_fused;
    let mut param_grads: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(cnn_branch.len() + 1);
    for (i, layer) in cnn_branch.iter().enumerate().rev() {
        let input = if i == 0 { &cache.input } else { &cache.cnn[i - 1].1 };
        let (gx, gw, gb) = conv2d_backward_from_pre(input, &cache.cnn[i].0, layer, &grad)?;
        param_grads.push((gw, gb));
        grad = gx;
    }
    param_grads.reverse();
    param_grads.push((gw_head, gb_head));

    // Flatten into the packing order: branch layers then head, weights
    // then bias.
    let mut off = 0;
    for (gw, gb) in &param_grads {
        grad_sink[off..off + gw.len()]
            .iter_mut()
            .zip(gw.iter())
            .for_each(|(a, b)| *a += b);
        off += gw.len();
        grad_sink[off..off + gb.len()]
            .iter_mut()
            .zip(gb.iter())
            .for_each(|(a, b)| *a += b);
        off += gb.len();
    }
    debug_assert_eq!(off, grad_sink.len());
    Ok(grad)
}

fn stage_param_count(cnn_branch: &[ConvLayer], head: &ConvLayer) -> usize {
    cnn_branch.iter().map(|l| l.n_params()).sum::<usize>() + head.n_params()
}

/// Total trainable parameter count of a model.
pub fn bno_param_count(model: &BnoModel) -> usize {
    model.layers.iter().map(|l| stage_param_count(&l.cnn_branch, &l.head)).sum()
}

pub fn cnn_param_count(model: &CnnModel) -> usize {
    model.stages.iter().map(|s| stage_param_count(&s.cnn_branch, &s.head)).sum()
}

/// Backward through the whole model from cached activations, accumulating
/// parameter gradients in packing order into `grad_sink` (adds to what is
/// already there, so batches can share one buffer).
pub fn bno_backward_from_caches(
    model: &BnoModel,
    caches: &[StageCache],
    grad_out: &Tensor3,
    grad_sink: &mut [f64],
) -> Result<(), ModelError> {
    if caches.len() != model.layers.len() {
        return Err(ModelError::Shape("cache/layer count mismatch".into()));
    }
    if grad_sink.len() != bno_param_count(model) {
        return Err(ModelError::Shape("gradient buffer length mismatch".into()));
    }
    let mut grad = grad_out.clone();
    let mut offsets: Vec<(usize, usize)> = Vec::with_capacity(model.layers.len());
    let mut off = 0;
    for l in &model.layers {
        let n = stage_param_count(&l.cnn_branch, &l.head);
        offsets.push((off, n));
        off += n;
    }
    for (i, layer) in model.layers.iter().enumerate().rev() {
        let (o, n) = offsets[i];
        grad = stage_backward(
            &layer.cnn_branch,
            &layer.head,
            &caches[i],
            &grad,
            &mut grad_sink[o..o + n],
        )?;
    }
    Ok(())
}

/// CNN baseline analog of [`bno_backward_from_caches`].
pub fn cnn_backward_from_caches(
    model: &CnnModel,
    caches: &[StageCache],
    grad_out: &Tensor3,
    grad_sink: &mut [f64],
) -> Result<(), ModelError> {
    if caches.len() != model.stages.len() {
        return Err(ModelError::Shape("cache/stage count mismatch".into()));
    }
    if grad_sink.len() != cnn_param_count(model) {
        return Err(ModelError::Shape("gradient buffer length mismatch".into()));
    }
    let mut grad = grad_out.clone();
    let mut offsets: Vec<(usize, usize)> = Vec::with_capacity(model.stages.len());
    let mut off = 0;
    for s in &model.stages {
        let n = stage_param_count(&s.cnn_branch, &s.head);
        offsets.push((off, n));
        off += n;
    }
    for (i, stage) in model.stages.iter().enumerate().rev() {
        let (o, n) = offsets[i];
        grad = stage_backward(
            &stage.cnn_branch,
            &stage.head,
            &caches[i],
            &grad,
            &mut grad_sink[o..o + n],
        )?;
    }
    Ok(())
}

/// Gradients of the batch MSE with respect to every parameter, plus the
/// loss and the count of Koopman fallbacks encountered.
pub fn bno_backward(
    model: &BnoModel,
    inputs: &[Tensor3],
    targets: &[Tensor3],
    dt: f64,
) -> Result<(f64, Vec<f64>, usize), ModelError> {
    if inputs.len() != targets.len() || inputs.is_empty() {
        return Err(ModelError::Shape("batch and target counts differ or are empty".into()));
    }
    let mut grads = vec![0.0; bno_param_count(model)];
    let mut fallbacks = 0usize;
    let mut preds = Vec::with_capacity(inputs.len());
    let mut caches_all = Vec::with_capacity(inputs.len());
    for u in inputs {
        let caches = bno_forward_cached(model, u, dt, None)?;
        fallbacks += caches.iter().filter(|c| c.fallback).count();
        preds.push(caches.last().unwrap().output.clone());
        caches_all.push(caches);
    }
    let (loss, grad_outs) = crate::neural::mse_loss(&preds, targets)?;
    for (caches, g) in caches_all.iter().zip(grad_outs.iter()) {
        bno_backward_from_caches(model, caches, g, &mut grads)?;
    }
    Ok((loss, grads, fallbacks))
}

fn stage_tensors<'a>(
    cnn_branch: &'a [ConvLayer],
    head: &'a ConvLayer,
    li: usize,
) -> Vec<(String, Vec<usize>, &'a [f64])> {
    let mut out = Vec::new();
    for (ci, l) in cnn_branch.iter().enumerate() {
        out.push((
            format!("layer{li}.cnn{ci}.weight"),
            vec![l.kh, l.kw, l.in_chan, l.out_chan],
            l.weights.as_slice(),
        ));
        out.push((format!("layer{li}.cnn{ci}.bias"), vec![l.out_chan], l.bias.as_slice()));
    }
    out.push((
        format!("layer{li}.head.weight"),
        vec![head.kh, head.kw, head.in_chan, head.out_chan],
        head.weights.as_slice(),
    ));
    out.push((format!("layer{li}.head.bias"), vec![head.out_chan], head.bias.as_slice()));
    out
}

/// Named parameter tensors in packing order.
pub fn bno_named_tensors(model: &BnoModel) -> Vec<(String, Vec<usize>, &[f64])> {
    model
        .layers
        .iter()
        .enumerate()
        .flat_map(|(li, l)| stage_tensors(&l.cnn_branch, &l.head, li))
        .collect()
}

pub fn cnn_named_tensors(model: &CnnModel) -> Vec<(String, Vec<usize>, &[f64])> {
    model
        .stages
        .iter()
        .enumerate()
        .flat_map(|(li, s)| stage_tensors(&s.cnn_branch, &s.head, li))
        .collect()
}

/// Flat parameter vector in packing order (branch layers then head per
/// layer, weights before bias).
pub fn pack_params(model: &BnoModel) -> Vec<f64> {
    bno_named_tensors(model).iter().flat_map(|(_, _, d)| d.iter().copied()).collect()
}

pub fn pack_params_cnn(model: &CnnModel) -> Vec<f64> {
    cnn_named_tensors(model).iter().flat_map(|(_, _, d)| d.iter().copied()).collect()
}

fn copy_into(dst: &mut [f64], flat: &[f64], off: &mut usize) {
    let n = dst.len();
    dst.copy_from_slice(&flat[*off..*off + n]);
    *off += n;
}

fn unpack_stage(cnn_branch: &mut [ConvLayer], head: &mut ConvLayer, flat: &[f64], off: &mut usize) {
    for l in cnn_branch.iter_mut() {
        copy_into(&mut l.weights, flat, off);
        copy_into(&mut l.bias, flat, off);
    }
    copy_into(&mut head.weights, flat, off);
    copy_into(&mut head.bias, flat, off);
}

/// Writes a flat parameter vector back into the model.
pub fn unpack_params(model: &mut BnoModel, flat: &[f64]) -> Result<(), ModelError> {
    if flat.len() != bno_param_count(model) {
        return Err(ModelError::Shape(format!(
            "parameter vector length {} != model parameter count {}",
            flat.len(),
            bno_param_count(model)
        )));
    }
    let mut off = 0;
    for l in model.layers.iter_mut() {
        unpack_stage(&mut l.cnn_branch, &mut l.head, flat, &mut off);
    }
    Ok(())
}

pub fn unpack_params_cnn(model: &mut CnnModel, flat: &[f64]) -> Result<(), ModelError> {
    if flat.len() != cnn_param_count(model) {
        return Err(ModelError::Shape(format!(
            "parameter vector length {} != model parameter count {}",
            flat.len(),
            cnn_param_count(model)
        )));
    }
    let mut off = 0;
    for s in model.stages.iter_mut() {
        unpack_stage(&mut s.cnn_branch, &mut s.head, flat, &mut off);
    }
    Ok(())
}

/// Copies all convolutional weights from a hybrid model into a baseline
/// of identical stack shape; the Koopman configuration is dropped.
pub fn transfer_bno_to_cnn(src: &BnoModel) -> CnnModel {
    CnnModel {
        stages: src
            .layers
            .iter()
            .map(|l| CnnStage { cnn_branch: l.cnn_branch.clone(), head: l.head.clone() })
            .collect(),
        norm_stats: src.norm_stats,
        window: src.window,
        meta: src.meta.clone(),
    }
}

/// Copies baseline weights into a hybrid model with the given Koopman
/// configuration.
pub fn transfer_cnn_to_bno(src: &CnnModel, dmd_rank: usize, dmd_horizon: usize) -> BnoModel {
    BnoModel {
        layers: src
            .stages
            .iter()
            .map(|s| BanachLayer {
                cnn_branch: s.cnn_branch.clone(),
                head: s.head.clone(),
                dmd_rank,
                dmd_horizon,
                fuse_chan: s.head.in_chan,
            })
            .collect(),
        norm_stats: src.norm_stats,
        window: src.window,
        meta: src.meta.clone(),
    }
}
