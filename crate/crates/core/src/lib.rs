//! Core library for the Banach neural operator (BNO): a hybrid forecaster
//! that couples an exact dynamic mode decomposition (DMD) of its input with
//! a convolutional corrector network.
//!
//! The crate is organized bottom-up:
//!
//! * [`linalg`] — dense real/complex matrices, truncated SVD, dense
//!   eigendecomposition, and Moore-Penrose pseudoinverse. Everything the
//!   DMD path needs, in 64-bit.
//! * [`dmd`] — snapshot matrices, DMD fitting/reconstruction, and the
//!   discrete Koopman operator built from a fitted model.
//! * [`neural`] — rank-3 tensors, 2-D convolution layers with exact
//!   gradients, the MSE loss, Adam, and a piecewise-constant LR schedule.
//! * [`data`] — field containers and I/O, Z-score normalization, average
//!   pooling, sliding-window dataset construction, and a closed-form
//!   synthetic field generator.
//! * [`model`] — the Banach layer (CNN branch + DMD branch + fused head),
//!   multi-layer models, a CNN-only baseline, checkpointing, and
//!   cross-architecture weight transfer.
//! * [`train`] — the mini-batch Adam training loop (deterministic under a
//!   fixed seed, optionally batch-parallel with a fixed reduction order).
//! * [`eval`] — one-step prediction, autoregressive window rollout with
//!   divergence detection, zero-shot super-resolution evaluation, timing
//!   probes, and report emission.
//!
//! All operations are pure functions over owned data; nothing in the crate
//! uses interior mutability or global state, so every type is `Send + Sync`
//! and results are reproducible bit-for-bit from (inputs, seed) on a single
//! thread. The optional batch parallelism in [`train`] reduces per-sample
//! gradients in a fixed order and therefore produces the same bits as the
//! serial path.

pub mod data;
pub mod dmd;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod neural;
pub mod train;
