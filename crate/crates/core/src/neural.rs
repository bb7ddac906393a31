//! Minimal convolutional stack: 2-D same-padded convolution over
//! (space, time) grids with forward and exact backward passes, the mean
//! squared error loss, the Adam optimizer, and a piecewise-constant
//! learning-rate schedule.
//!
//! Tensors are dense row-major over (space, time, channel) with channel
//! fastest. The convolution treats the flattened spatial index as the image
//! height and the time index as the width; a 5x5 kernel therefore mixes
//! five neighboring flattened pixels with five neighboring time steps.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("channel mismatch: layer expects {expected} input channels, tensor has {got}")]
    ChanMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("kernel taps must be odd for same padding, got {kh}x{kw}")]
    EvenKernel { kh: usize, kw: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Dense rank-3 tensor over (space, time, channel), channel fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub n_space: usize,
    pub n_time: usize,
    pub n_chan: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n_space: usize, n_time: usize, n_chan: usize) -> Self {
        Tensor3 { n_space, n_time, n_chan, data: vec![0.0; n_space * n_time * n_chan] }
    }

    pub fn from_fn(
        n_space: usize,
        n_time: usize,
        n_chan: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut t = Tensor3::zeros(n_space, n_time, n_chan);
        for s in 0..n_space {
            for ti in 0..n_time {
                for c in 0..n_chan {
                    let v = f(s, ti, c);
                    t.data[(s * n_time + ti) * n_chan + c] = v;
                }
            }
        }
        t
    }

    #[inline]
    pub fn idx(&self, s: usize, t: usize, c: usize) -> usize {
        (s * self.n_time + t) * self.n_chan + c
    }

    #[inline]
    pub fn get(&self, s: usize, t: usize, c: usize) -> f64 {
        self.data[self.idx(s, t, c)]
    }

    #[inline]
    pub fn set(&mut self, s: usize, t: usize, c: usize, v: f64) {
        let i = self.idx(s, t, c);
        self.data[i] = v;
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n_space, self.n_time, self.n_chan)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Linear => x,
        }
    }

    /// Derivative as a function of the pre-activation value.
    #[inline]
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }
}

/// One convolution layer. `kh` taps run along the time axis and `kw` taps
/// along the flattened space axis; both must be odd so that same padding is
/// symmetric. Weights are stored as (kh, kw, in_chan, out_chan) row-major,
/// which keeps the out_chan stride contiguous for the inner loops.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub kh: usize,
    pub kw: usize,
    pub in_chan: usize,
    pub out_chan: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl ConvLayer {
    /// Glorot-style uniform initialization in +-sqrt(6/(fan_in+fan_out)),
    /// zero bias.
    pub fn glorot(
        kh: usize,
        kw: usize,
        in_chan: usize,
        out_chan: usize,
        activation: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NeuralError> {
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(NeuralError::EvenKernel { kh, kw });
        }
        let fan_in = (kh * kw * in_chan) as f64;
        let fan_out = (kh * kw * out_chan) as f64;
        let limit = (6.0 / (fan_in + fan_out)).sqrt();
        let weights = (0..kh * kw * in_chan * out_chan)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        Ok(ConvLayer { kh, kw, in_chan, out_chan, weights, bias: vec![0.0; out_chan], activation })
    }

    /// Builds a layer from explicit parameters, validating shapes.
    pub fn from_parts(
        kh: usize,
        kw: usize,
        in_chan: usize,
        out_chan: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self, NeuralError> {
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(NeuralError::EvenKernel { kh, kw });
        }
        if weights.len() != kh * kw * in_chan * out_chan {
            return Err(NeuralError::ShapeMismatch(format!(
                "weight length {} != {}x{}x{}x{}",
                weights.len(),
                kh,
                kw,
                in_chan,
                out_chan
            )));
        }
        if bias.len() != out_chan {
            return Err(NeuralError::ShapeMismatch(format!(
                "bias length {} != out_chan {}",
                bias.len(),
                out_chan
            )));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(NeuralError::NonFinite("layer parameters"));
        }
        Ok(ConvLayer { kh, kw, in_chan, out_chan, weights, bias, activation })
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    #[inline]
    fn w_row(&self, a: usize, b: usize, ic: usize) -> &[f64] {
        let base = ((a * self.kw + b) * self.in_chan + ic) * self.out_chan;
        &self.weights[base..base + self.out_chan]
    }
}

fn check_input(x: &Tensor3, layer: &ConvLayer) -> Result<(), NeuralError> {
    if x.n_chan != layer.in_chan {
        return Err(NeuralError::ChanMismatch { expected: layer.in_chan, got: x.n_chan });
    }
    Ok(())
}

/// Valid output range [lo, hi) for one kernel tap: positions p such that
/// p + offset stays inside [0, len).
#[inline]
fn tap_range(len: usize, offset: isize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi_signed = len as isize - offset.max(0);
    (lo.min(len), hi_signed.max(0) as usize)
}

/// Pre-activation same convolution: correlation with zero padding plus
/// bias, no activation applied. Shared by the forward and backward passes.
pub fn conv_pre(x: &Tensor3, layer: &ConvLayer) -> Result<Tensor3, NeuralError> {
    check_input(x, layer)?;
    let (ns, nt, _) = x.shape();
    let oc = layer.out_chan;
    let icc = layer.in_chan;
    let kh2 = (layer.kh / 2) as isize;
    let kw2 = (layer.kw / 2) as isize;
    let mut out = Tensor3::zeros(ns, nt, oc);
    let mut acc = vec![0.0f64; oc];
    for s in 0..ns {
        for t in 0..nt {
            acc.copy_from_slice(&layer.bias);
            for a in 0..layer.kh {
                let tt = t as isize + a as isize - kh2;
                if tt < 0 || tt >= nt as isize {
                    continue;
                }
                for b in 0..layer.kw {
                    let ss = s as isize + b as isize - kw2;
                    if ss < 0 || ss >= ns as isize {
                        continue;
                    }
                    let xb = (ss as usize * nt + tt as usize) * icc;
                    for ic in 0..icc {
                        let xv = x.data[xb + ic];
                        // Relu upstream makes many inputs exactly zero;
                        // skipping them skips a whole weight row.
                        if xv == 0.0 {
                            continue;
                        }
                        let wrow = layer.w_row(a, b, ic);
                        for (av, wv) in acc.iter_mut().zip(wrow.iter()) {
                            *av += xv * wv;
                        }
                    }
                }
            }
            let ob = (s * nt + t) * oc;
            out.data[ob..ob + oc].copy_from_slice(&acc);
        }
    }
    Ok(out)
}

/// Zero-padded stride-1 "same" convolution with the layer activation.
/// Output shape is (n_space, n_time, out_chan).
pub fn conv2d_forward(x: &Tensor3, layer: &ConvLayer) -> Result<Tensor3, NeuralError> {
    let mut pre = conv_pre(x, layer)?;
    for v in pre.data.iter_mut() {
        *v = layer.activation.apply(*v);
    }
    Ok(pre)
}

/// Gradients of the forward map. Recomputes the pre-activation internally;
/// callers holding it from the forward pass should use
/// [`conv2d_backward_from_pre`].
pub fn conv2d_backward(
    x: &Tensor3,
    layer: &ConvLayer,
    grad_out: &Tensor3,
) -> Result<(Tensor3, Vec<f64>, Vec<f64>), NeuralError> {
    let pre = conv_pre(x, layer)?;
    conv2d_backward_from_pre(x, &pre, layer, grad_out)
}

/// Backward pass given the saved pre-activation tensor. Returns
/// (grad_input, grad_weights, grad_bias) with the weight gradient in the
/// layer's own (kh, kw, in_chan, out_chan) layout.
pub fn conv2d_backward_from_pre(
    x: &Tensor3,
    pre: &Tensor3,
    layer: &ConvLayer,
    grad_out: &Tensor3,
) -> Result<(Tensor3, Vec<f64>, Vec<f64>), NeuralError> {
    check_input(x, layer)?;
    let (ns, nt, _) = x.shape();
    let oc = layer.out_chan;
    let ic_ct = layer.in_chan;
    if grad_out.shape() != (ns, nt, oc) {
        return Err(NeuralError::ShapeMismatch(format!(
            "grad_out shape {:?} != ({ns}, {nt}, {oc})",
            grad_out.shape()
        )));
    }
    if pre.shape() != (ns, nt, oc) {
        return Err(NeuralError::ShapeMismatch(format!(
            "pre-activation shape {:?} != ({ns}, {nt}, {oc})",
            pre.shape()
        )));
    }

    // Gate the incoming gradient through the activation derivative once.
    let mut g = grad_out.clone();
    for (gv, pv) in g.data.iter_mut().zip(pre.data.iter()) {
        *gv *= layer.activation.derivative(*pv);
    }

    let mut grad_x = Tensor3::zeros(ns, nt, ic_ct);
    let mut grad_w = vec![0.0f64; layer.weights.len()];
    let mut grad_b = vec![0.0f64; oc];
    let kh2 = (layer.kh / 2) as isize;
    let kw2 = (layer.kw / 2) as isize;

    for pos in 0..ns * nt {
        let grow = &g.data[pos * oc..(pos + 1) * oc];
        for (bv, gv) in grad_b.iter_mut().zip(grow.iter()) {
            *bv += gv;
        }
    }

    for a in 0..layer.kh {
        let dt = a as isize - kh2;
        let (t_lo, t_hi) = tap_range(nt, dt);
        if t_lo >= t_hi {
            continue;
        }
        for b in 0..layer.kw {
            let ds = b as isize - kw2;
            let (s_lo, s_hi) = tap_range(ns, ds);
            let wbase = ((a * layer.kw + b) * ic_ct) * oc;
            for s in s_lo..s_hi {
                let ss = (s as isize + ds) as usize;
                let x_off = (ss * nt + (t_lo as isize + dt) as usize) * ic_ct;
                let g_off = (s * nt + t_lo) * oc;
                let n_t = t_hi - t_lo;
                let xs = &x.data[x_off..x_off + n_t * ic_ct];
                let gxs = &mut grad_x.data[x_off..x_off + n_t * ic_ct];
                let gs = &g.data[g_off..g_off + n_t * oc];
                for t in 0..n_t {
                    let xrow = &xs[t * ic_ct..(t + 1) * ic_ct];
                    let gxrow = &mut gxs[t * ic_ct..(t + 1) * ic_ct];
                    let grow = &gs[t * oc..(t + 1) * oc];
                    for ic in 0..ic_ct {
                        let xv = xrow[ic];
                        let wrow = &layer.weights[wbase + ic * oc..wbase + (ic + 1) * oc];
                        let gwrow = &mut grad_w[wbase + ic * oc..wbase + (ic + 1) * oc];
                        let mut dot = 0.0;
                        for k in 0..oc {
                            let gv = grow[k];
                            gwrow[k] += xv * gv;
                            dot += wrow[k] * gv;
                        }
                        gxrow[ic] += dot;
                    }
                }
            }
        }
    }
    Ok((grad_x, grad_w, grad_b))
}

/// Mean squared error over a batch: the mean over every scalar entry of
/// the squared difference, with the matching gradient 2*(pred-target)/count.
pub fn mse_loss(pred: &[Tensor3], target: &[Tensor3]) -> Result<(f64, Vec<Tensor3>), NeuralError> {
    if pred.len() != target.len() {
        return Err(NeuralError::ShapeMismatch(format!(
            "batch sizes differ: {} vs {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(NeuralError::ShapeMismatch("empty batch".into()));
    }
    let count: usize = pred.iter().map(|p| p.data.len()).sum();
    let mut loss = 0.0f64;
    let mut grads = Vec::with_capacity(pred.len());
    for (p, t) in pred.iter().zip(target.iter()) {
        if p.shape() != t.shape() {
            return Err(NeuralError::ShapeMismatch(format!(
                "prediction shape {:?} != target shape {:?}",
                p.shape(),
                t.shape()
            )));
        }
        let mut g = Tensor3::zeros(p.n_space, p.n_time, p.n_chan);
        for ((gv, pv), tv) in g.data.iter_mut().zip(p.data.iter()).zip(t.data.iter()) {
            let d = pv - tv;
            loss += d * d;
            *gv = 2.0 * d / count as f64;
        }
        grads.push(g);
    }
    Ok((loss / count as f64, grads))
}

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam update with bias correction. Mutates `params` and `state`.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
) -> Result<(), NeuralError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(NeuralError::ShapeMismatch(format!(
            "param/grad/state lengths differ: {} / {} / {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let mhat = state.m[i] / bc1;
        let vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (vhat.sqrt() + state.epsilon);
    }
    Ok(())
}

/// Piecewise-constant learning-rate schedule counted in optimizer steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub boundaries: Vec<usize>,
    pub rates: Vec<f64>,
}

impl LrSchedule {
    pub fn new(boundaries: Vec<usize>, rates: Vec<f64>) -> Result<Self, NeuralError> {
        if rates.len() != boundaries.len() + 1 {
            return Err(NeuralError::ShapeMismatch(format!(
                "need {} rates for {} boundaries, got {}",
                boundaries.len() + 1,
                boundaries.len(),
                rates.len()
            )));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(NeuralError::ShapeMismatch("boundaries must be strictly increasing".into()));
        }
        if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(NeuralError::ShapeMismatch("rates must be positive".into()));
        }
        Ok(LrSchedule { boundaries, rates })
    }

    /// The published default: 1e-3 until step 1500, 1e-4 until 2500,
    /// 1e-5 after.
    pub fn standard() -> Self {
        LrSchedule { boundaries: vec![1500, 2500], rates: vec![1e-3, 1e-4, 1e-5] }
    }
}

/// Rate in effect at a given optimizer step: `rates[i]` where `i` counts
/// the boundaries less than or equal to `iteration`.
pub fn lr_at(schedule: &LrSchedule, iteration: usize) -> f64 {
    let idx = schedule.boundaries.iter().take_while(|b| **b <= iteration).count();
    schedule.rates[idx]
}
