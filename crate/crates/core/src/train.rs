//! Mini-batch Adam training loop shared by the hybrid model and the CNN
//! baseline.
//!
//! The loop is deterministic under a fixed seed: the per-epoch shuffle is
//! driven by one seeded stream, and per-sample gradients are reduced in
//! batch order regardless of how many worker threads computed them, so
//! `threads > 1` produces the same bits as the serial path.
//!
//! One DMD property pays off here: the first layer's Koopman branch
//! consumes the raw input window, which never changes across epochs, so
//! its forecast is fit once per window up front instead of once per
//! gradient step. Later layers (if any) see weight-dependent inputs and
//! refit on every pass.

use crate::data::Dataset;
use crate::model::{
    bno_backward_from_caches, bno_forward_cached, bno_param_count, cnn_backward_from_caches,
    cnn_forward_cached, cnn_param_count, koopman_forecast, pack_params, pack_params_cnn,
    unpack_params, unpack_params_cnn, BnoModel, CnnModel, ModelError, StageCache, WINDOW_DT,
};
use crate::neural::{adam_step, lr_at, AdamState, LrSchedule, Tensor3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("training split is empty")]
    EmptyTrainSplit,
    #[error("bad training settings: {0}")]
    BadSettings(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Neural(#[from] crate::neural::NeuralError),
}

/// Knobs for one training run.
#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
    /// Worker threads for per-sample gradient evaluation. 1 = serial.
    pub threads: usize,
    /// Optional hard cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
}

impl TrainSettings {
    /// Batch size 10 and the three-phase learning-rate schedule.
    pub fn standard(epochs: usize, seed: u64) -> Self {
        TrainSettings {
            epochs,
            batch_size: 10,
            schedule: LrSchedule::standard(),
            seed,
            threads: 1,
            max_steps: None,
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::BadSettings("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::BadSettings("batch_size must be at least 1".into()));
        }
        if self.threads == 0 {
            return Err(TrainError::BadSettings("threads must be at least 1".into()));
        }
        if self.max_steps == Some(0) {
            return Err(TrainError::BadSettings("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// One line of the loss history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean train MSE over the samples visited this epoch.
    pub train_mse: f64,
    /// Validation MSE after the epoch (NaN when the split is empty).
    pub val_mse: f64,
    /// Optimizer steps completed by the end of this epoch.
    pub steps_done: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// Total optimizer steps taken.
    pub steps: usize,
    /// Koopman fallbacks encountered during gradient passes.
    pub dmd_fallbacks: usize,
}

impl TrainOutcome {
    pub fn final_train_mse(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.train_mse)
    }

    pub fn final_val_mse(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.val_mse)
    }

    /// Final-epoch |train - validation| difference.
    pub fn overfit_gap(&self) -> f64 {
        (self.final_train_mse() - self.final_val_mse()).abs()
    }
}

/// Precomputed first-stage state for one window: the hoisted Koopman
/// forecast (zeros when the fit was degenerate) or nothing for models
/// without a Koopman branch.
pub struct FirstStagePrep {
    forecast: Option<Tensor3>,
    fallback: bool,
}

/// What the loop needs from a model; implemented by [`BnoModel`] and
/// [`CnnModel`] so both kinds train through identical code.
pub trait TrainableModel: Sync {
    fn param_count(&self) -> usize;
    fn pack(&self) -> Vec<f64>;
    fn unpack(&mut self, flat: &[f64]) -> Result<(), ModelError>;
    /// Work that depends only on the input window, hoisted out of the
    /// epoch loop.
    fn prepare(&self, u: &Tensor3) -> Result<FirstStagePrep, ModelError>;
    fn forward_prepared(
        &self,
        u: &Tensor3,
        prep: &FirstStagePrep,
    ) -> Result<Vec<StageCache>, ModelError>;
    fn backward_cached(
        &self,
        caches: &[StageCache],
        grad_out: &Tensor3,
        sink: &mut [f64],
    ) -> Result<(), ModelError>;
}

impl TrainableModel for BnoModel {
    fn param_count(&self) -> usize {
        bno_param_count(self)
    }

    fn pack(&self) -> Vec<f64> {
        pack_params(self)
    }

    fn unpack(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        unpack_params(self, flat)
    }

    fn prepare(&self, u: &Tensor3) -> Result<FirstStagePrep, ModelError> {
        let first = &self.layers[0];
        match koopman_forecast(u, first.dmd_rank, first.dmd_horizon, WINDOW_DT)? {
            Some(k) => Ok(FirstStagePrep { forecast: Some(k), fallback: false }),
            None => Ok(FirstStagePrep {
                forecast: Some(Tensor3::zeros(u.n_space, u.n_time, 1)),
                fallback: true,
            }),
        }
    }

    fn forward_prepared(
        &self,
        u: &Tensor3,
        prep: &FirstStagePrep,
    ) -> Result<Vec<StageCache>, ModelError> {
        bno_forward_cached(self, u, WINDOW_DT, prep.forecast.as_ref())
    }

    fn backward_cached(
        &self,
        caches: &[StageCache],
        grad_out: &Tensor3,
        sink: &mut [f64],
    ) -> Result<(), ModelError> {
        bno_backward_from_caches(self, caches, grad_out, sink)
    }
}

impl TrainableModel for CnnModel {
    fn param_count(&self) -> usize {
        cnn_param_count(self)
    }

    fn pack(&self) -> Vec<f64> {
        pack_params_cnn(self)
    }

    fn unpack(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        unpack_params_cnn(self, flat)
    }

    fn prepare(&self, _u: &Tensor3) -> Result<FirstStagePrep, ModelError> {
        Ok(FirstStagePrep { forecast: None, fallback: false })
    }

    fn forward_prepared(
        &self,
        u: &Tensor3,
        _prep: &FirstStagePrep,
    ) -> Result<Vec<StageCache>, ModelError> {
        cnn_forward_cached(self, u)
    }

    fn backward_cached(
        &self,
        caches: &[StageCache],
        grad_out: &Tensor3,
        sink: &mut [f64],
    ) -> Result<(), ModelError> {
        cnn_backward_from_caches(self, caches, grad_out, sink)
    }
}

/// Gradient pass for one sample: forward with the hoisted first-stage
/// state, per-sample loss terms, backward into a zeroed buffer.
///
/// The loss convention matches the batch MSE: with `count` the total
/// scalar count of the batch, the sample contributes sum((p-t)^2) to the
/// numerator and receives output gradient 2(p-t)/count.
fn sample_grad<M: TrainableModel>(
    model: &M,
    input: &Tensor3,
    target: &Tensor3,
    prep: &FirstStagePrep,
    count: usize,
) -> Result<(f64, Vec<f64>, usize), ModelError> {
    let caches = model.forward_prepared(input, prep)?;
    let pred = &caches.last().unwrap().output;
    if pred.shape() != target.shape() {
        return Err(ModelError::Shape(format!(
            "prediction shape {:?} does not match target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let mut sq_sum = 0.0;
    let mut grad_out = Tensor3::zeros(pred.n_space, pred.n_time, pred.n_chan);
    for (g, (p, t)) in grad_out.data.iter_mut().zip(pred.data.iter().zip(target.data.iter())) {
        let d = p - t;
        sq_sum += d * d;
        *g = 2.0 * d / count as f64;
    }
    let fallbacks = prep.fallback as usize
        + caches.iter().skip(1).filter(|c| c.fallback).count();
    let mut grads = vec![0.0; model.param_count()];
    model.backward_cached(&caches, &grad_out, &mut grads)?;
    Ok((sq_sum, grads, fallbacks))
}

type SampleResult = Result<(f64, Vec<f64>, usize), ModelError>;

/// Per-sample gradients for one batch, in batch order. With more than one
/// thread the samples are split into contiguous chunks, but results come
/// back position-indexed, so the reduction order (and hence the bits) do
/// not depend on the thread count.
fn batch_sample_results<M: TrainableModel>(
    model: &M,
    inputs: &[Tensor3],
    targets: &[Tensor3],
    preps: &[&FirstStagePrep],
    batch: &[usize],
    threads: usize,
) -> Vec<SampleResult> {
    let count: usize = batch.iter().map(|&i| targets[i].data.len()).sum();
    let work = |&i: &usize| sample_grad(model, &inputs[i], &targets[i], preps[i], count);
    if threads <= 1 || batch.len() <= 1 {
        return batch.iter().map(work).collect();
    }
    let chunk = batch.len().div_ceil(threads);
    let mut results: Vec<Option<SampleResult>> = (0..batch.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (batch_chunk, out_chunk) in batch.chunks(chunk).zip(results.chunks_mut(chunk)) {
            scope.spawn(move || {
                for (slot, i) in out_chunk.iter_mut().zip(batch_chunk.iter()) {
                    *slot = Some(work(i));
                }
            });
        }
    });
    results.into_iter().map(|r| r.expect("every slot filled by its chunk")).collect()
}

/// Forward-only mean squared error over the given windows, summed in
/// index order.
fn split_mse<M: TrainableModel>(
    model: &M,
    inputs: &[Tensor3],
    targets: &[Tensor3],
    preps: &[&FirstStagePrep],
    idx: &[usize],
) -> Result<f64, ModelError> {
    if idx.is_empty() {
        return Ok(f64::NAN);
    }
    let mut sq_sum = 0.0;
    let mut count = 0usize;
    for &i in idx {
        let caches = model.forward_prepared(&inputs[i], preps[i])?;
        let pred = &caches.last().unwrap().output;
        for (p, t) in pred.data.iter().zip(targets[i].data.iter()) {
            let d = p - t;
            sq_sum += d * d;
        }
        count += targets[i].data.len();
    }
    Ok(sq_sum / count as f64)
}

/// Trains the model in place on the dataset's train split and evaluates
/// the validation split after every epoch.
///
/// Batches are drawn from a seeded shuffle that reshuffles every epoch; a
/// trailing partial batch is kept. The learning rate for a step is looked
/// up by the number of optimizer steps already taken.
pub fn train_model<M: TrainableModel>(
    model: &mut M,
    dataset: &Dataset,
    settings: &TrainSettings,
) -> Result<TrainOutcome, TrainError> {
    settings.validate()?;
    if dataset.train_idx.is_empty() {
        return Err(TrainError::EmptyTrainSplit);
    }

    // Hoist the input-only work (first-stage Koopman fits) out of the
    // epoch loop. Windows are indexed once; both splits are covered.
    let preps: Vec<FirstStagePrep> = dataset
        .inputs
        .iter()
        .map(|u| model.prepare(u))
        .collect::<Result<_, _>>()?;
    let prep_refs: Vec<&FirstStagePrep> = preps.iter().collect();

    let mut params = model.pack();
    let mut adam = AdamState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut order: Vec<usize> = dataset.train_idx.clone();

    let mut history = Vec::with_capacity(settings.epochs);
    let mut steps = 0usize;
    let mut fallbacks = 0usize;
    let step_budget = settings.max_steps.unwrap_or(usize::MAX);

    'epochs: for epoch in 1..=settings.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sq_sum = 0.0;
        let mut epoch_count = 0usize;
        let mut batches_done = 0usize;

        for (batch_no, batch) in order.chunks(settings.batch_size).enumerate() {
            let lr = lr_at(&settings.schedule, steps);
            let results = batch_sample_results(
                model,
                &dataset.inputs,
                &dataset.labels,
                &prep_refs,
                batch,
                settings.threads,
            );
            let count: usize = batch.iter().map(|&i| dataset.labels[i].data.len()).sum();
            let mut grads = vec![0.0; params.len()];
            let mut batch_sq_sum = 0.0;
            for res in results {
                let (sq, g, fb) = res?;
                batch_sq_sum += sq;
                fallbacks += fb;
                for (a, b) in grads.iter_mut().zip(g.iter()) {
                    *a += b;
                }
            }
            let batch_loss = batch_sq_sum / count as f64;
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: batch_no });
            }
            log::debug!(
                "epoch {epoch} batch {batch_no}: loss {batch_loss:.6e} lr {lr:.1e} ({} samples)",
                batch.len()
            );

            adam_step(&mut params, &grads, &mut adam, lr)?;
            model.unpack(&params)?;
            epoch_sq_sum += batch_sq_sum;
            epoch_count += count;
            steps += 1;
            batches_done += 1;
            if steps >= step_budget {
                let train_mse = epoch_sq_sum / epoch_count as f64;
                let val_mse = split_mse(
                    model,
                    &dataset.inputs,
                    &dataset.labels,
                    &prep_refs,
                    &dataset.val_idx,
                )?;
                log::info!(
                    "epoch {epoch} (stopped at step cap): train {train_mse:.6e} val {val_mse:.6e} after {batches_done} batches"
                );
                history.push(EpochRecord { epoch, train_mse, val_mse, steps_done: steps });
                break 'epochs;
            }
        }

        let train_mse = epoch_sq_sum / epoch_count as f64;
        let val_mse =
            split_mse(model, &dataset.inputs, &dataset.labels, &prep_refs, &dataset.val_idx)?;
        log::info!("epoch {epoch}: train {train_mse:.6e} val {val_mse:.6e} ({steps} steps total)");
        history.push(EpochRecord { epoch, train_mse, val_mse, steps_done: steps });
    }

    if fallbacks > 0 {
        log::warn!("koopman branch fell back to zeros {fallbacks} times during training");
    }
    Ok(TrainOutcome { history, steps, dmd_fallbacks: fallbacks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_generate, ModeSpec, SynthSpec};
    use crate::data::{build_windows, WindowSpec};
    use crate::model::{bno_forward, BanachLayer, BnoModel, CnnStage, ModelMeta};
    use num_complex::Complex64;
    use rand::SeedableRng;

    fn linear_modes() -> SynthSpec {
        SynthSpec {
            modes: vec![
                ModeSpec {
                    omega: Complex64::new(0.0, 1.1),
                    amplitude: Complex64::new(1.0, 0.0),
                    kx: 1,
                    ky: 0,
                },
                ModeSpec {
                    omega: Complex64::new(-0.05, 2.3),
                    amplitude: Complex64::new(0.6, 0.2),
                    kx: 2,
                    ky: 1,
                },
            ],
            epsilon: 0.0,
        }
    }

    fn tiny_dataset(epsilon: f64) -> Dataset {
        let mut spec = linear_modes();
        spec.epsilon = epsilon;
        let field = synth_generate(&spec, 8, 4, 32, 0.1, 11).unwrap();
        let w = WindowSpec { n: 6, k: 1, m: 24, s: 1 };
        build_windows(&field, &w, 0.75).unwrap()
    }

    fn tiny_bno(seed: u64) -> BnoModel {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        BnoModel {
            layers: vec![BanachLayer::new(3, &[4, 4], 4, 1, &mut rng).unwrap()],
            norm_stats: crate::data::NormStats { mean: 0.0, std: 1.0 },
            window: WindowSpec { n: 6, k: 1, m: 24, s: 1 },
            meta: ModelMeta { seed, trained_nx: 8, trained_ny: 4, stop_gradient_exact: true },
        }
    }

    fn settings(epochs: usize, threads: usize) -> TrainSettings {
        TrainSettings {
            epochs,
            batch_size: 4,
            schedule: LrSchedule::standard(),
            seed: 5,
            threads,
            max_steps: None,
        }
    }

    #[test]
    fn loss_decreases_on_seeded_data() {
        let ds = tiny_dataset(0.0);
        let mut model = tiny_bno(1);
        let out = train_model(&mut model, &ds, &settings(12, 1)).unwrap();
        let first = out.history.first().unwrap().train_mse;
        let last = out.final_train_mse();
        assert!(last.is_finite() && first.is_finite());
        assert!(
            last < 0.5 * first,
            "expected at least 2x improvement, got {first:.3e} -> {last:.3e}"
        );
        assert!(out.final_val_mse().is_finite());
        assert_eq!(out.history.len(), 12);
    }

    #[test]
    fn cnn_baseline_trains_through_the_same_loop() {
        let ds = tiny_dataset(0.0);
        let bno = tiny_bno(2);
        let mut cnn = crate::model::transfer_bno_to_cnn(&bno);
        let out = train_model(&mut cnn, &ds, &settings(12, 1)).unwrap();
        assert!(out.final_train_mse() < out.history[0].train_mse);
        assert_eq!(out.dmd_fallbacks, 0);
    }

    #[test]
    fn fixed_seed_reproduces_bitwise() {
        let ds = tiny_dataset(0.05);
        let mut a = tiny_bno(3);
        let mut b = tiny_bno(3);
        let out_a = train_model(&mut a, &ds, &settings(4, 1)).unwrap();
        let out_b = train_model(&mut b, &ds, &settings(4, 1)).unwrap();
        assert_eq!(pack_params(&a), pack_params(&b));
        for (ra, rb) in out_a.history.iter().zip(out_b.history.iter()) {
            assert_eq!(ra, rb);
        }
    }

    #[test]
    fn threaded_reduction_matches_serial_bitwise() {
        let ds = tiny_dataset(0.05);
        let mut serial = tiny_bno(4);
        let mut threaded = tiny_bno(4);
        let out_s = train_model(&mut serial, &ds, &settings(3, 1)).unwrap();
        let out_t = train_model(&mut threaded, &ds, &settings(3, 3)).unwrap();
        assert_eq!(pack_params(&serial), pack_params(&threaded));
        for (rs, rt) in out_s.history.iter().zip(out_t.history.iter()) {
            assert_eq!(rs, rt);
        }
    }

    #[test]
    fn hoisted_forecast_matches_refit_forward_bitwise() {
        let ds = tiny_dataset(0.05);
        let model = tiny_bno(5);
        for u in ds.inputs.iter().take(6) {
            let prep = model.prepare(u).unwrap();
            let hoisted = model.forward_prepared(u, &prep).unwrap();
            let refit = bno_forward(&model, u, WINDOW_DT).unwrap();
            assert_eq!(hoisted.last().unwrap().output.data, refit.data);
        }
    }

    #[test]
    fn step_cap_stops_training() {
        let ds = tiny_dataset(0.0);
        let mut model = tiny_bno(6);
        let mut s = settings(50, 1);
        s.max_steps = Some(7);
        let out = train_model(&mut model, &ds, &s).unwrap();
        assert_eq!(out.steps, 7);
        // 18 train windows / batch 4 = 5 batches per epoch; the cap lands
        // mid-epoch 2 and the partial epoch is still recorded.
        assert_eq!(out.history.last().unwrap().epoch, 2);
        assert_eq!(out.history.last().unwrap().steps_done, 7);
    }

    #[test]
    fn non_finite_loss_is_reported_with_location() {
        let ds = tiny_dataset(0.0);
        let mut model = tiny_bno(7);
        let n = bno_param_count(&model);
        unpack_params(&mut model, &vec![1e200; n]).unwrap();
        match train_model(&mut model, &ds, &settings(2, 1)) {
            Err(TrainError::NonFiniteLoss { epoch: 1, batch: 0 }) => {}
            other => panic!("expected NonFiniteLoss at epoch 1 batch 0, got {other:?}"),
        }
    }

    #[test]
    fn empty_train_split_is_rejected() {
        let mut ds = tiny_dataset(0.0);
        ds.train_idx.clear();
        let mut model = tiny_bno(8);
        assert!(matches!(
            train_model(&mut model, &ds, &settings(1, 1)),
            Err(TrainError::EmptyTrainSplit)
        ));
    }

    #[test]
    fn degenerate_windows_are_counted_as_fallbacks() {
        // All-zero windows make every first-stage fit degenerate.
        let field = crate::data::FieldSeries::new(4, 2, 16, 0.1, vec![0.0; 4 * 2 * 16]).unwrap();
        let w = WindowSpec { n: 4, k: 1, m: 10, s: 1 };
        let ds = build_windows(&field, &w, 0.8).unwrap();
        let mut model = tiny_bno(9);
        let mut s = settings(1, 1);
        s.batch_size = 8;
        let out = train_model(&mut model, &ds, &s).unwrap();
        assert_eq!(out.dmd_fallbacks, 8);
    }

    #[test]
    fn settings_validation_rejects_zeroes() {
        let ds = tiny_dataset(0.0);
        let mut model = tiny_bno(10);
        let mut s = settings(0, 1);
        assert!(matches!(
            train_model(&mut model, &ds, &s),
            Err(TrainError::BadSettings(_))
        ));
        s = settings(1, 0);
        assert!(matches!(
            train_model(&mut model, &ds, &s),
            Err(TrainError::BadSettings(_))
        ));
        s = settings(1, 1);
        s.batch_size = 0;
        assert!(matches!(
            train_model(&mut model, &ds, &s),
            Err(TrainError::BadSettings(_))
        ));
    }

    #[test]
    fn multi_stage_cnn_and_bno_share_packing_layout() {
        // A two-layer model exercises the per-layer offset table in the
        // shared backward path.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let layers = vec![
            BanachLayer::new(3, &[3, 3], 3, 1, &mut rng).unwrap(),
            BanachLayer::new(3, &[3, 3], 3, 1, &mut rng).unwrap(),
        ];
        let stages: Vec<CnnStage> = layers
            .iter()
            .map(|l| CnnStage { cnn_branch: l.cnn_branch.clone(), head: l.head.clone() })
            .collect();
        let mut bno = BnoModel {
            layers,
            norm_stats: crate::data::NormStats { mean: 0.0, std: 1.0 },
            window: WindowSpec { n: 6, k: 1, m: 24, s: 1 },
            meta: ModelMeta { seed: 11, trained_nx: 8, trained_ny: 4, stop_gradient_exact: false },
        };
        let mut cnn = crate::model::CnnModel {
            stages,
            norm_stats: bno.norm_stats,
            window: bno.window,
            meta: bno.meta.clone(),
        };
        let ds = tiny_dataset(0.0);
        let out_b = train_model(&mut bno, &ds, &settings(2, 1)).unwrap();
        let out_c = train_model(&mut cnn, &ds, &settings(2, 1)).unwrap();
        assert!(out_b.final_train_mse().is_finite());
        assert!(out_c.final_train_mse().is_finite());
        assert_eq!(pack_params(&bno).len(), pack_params_cnn(&cnn).len());
    }
}
