//! Backpropagation through time and the Adam training loop.
//!
//! The backward pass walks the decoder in reverse, routing each step's
//! output gradient through the dense head, the gate equations, and the
//! prediction-feedback edge into the previous step, then hands the final
//! state gradients to the encoder and walks it in reverse as well.

use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    dense_forward, step_full, CellBiases, EdLstmModel, EpochStats, LstmCellParams, StepCache,
    TrainConfig, TrainHistory,
};
use crate::dataset::SequenceDataset;
use crate::error::{Error, Result};

/// Gradient accumulator for one LSTM cell.
#[derive(Debug, Clone)]
pub struct CellGrads {
    pub u_i: Array1<f64>,
    pub u_f: Array1<f64>,
    pub u_o: Array1<f64>,
    pub u_g: Array1<f64>,
    pub w_i: Array2<f64>,
    pub w_f: Array2<f64>,
    pub w_o: Array2<f64>,
    pub w_g: Array2<f64>,
    pub biases: Option<CellBiases>,
}

impl CellGrads {
    fn zeros_like(p: &LstmCellParams) -> Self {
        let u = p.hidden_units;
        Self {
            u_i: Array1::zeros(u),
            u_f: Array1::zeros(u),
            u_o: Array1::zeros(u),
            u_g: Array1::zeros(u),
            w_i: Array2::zeros((u, u)),
            w_f: Array2::zeros((u, u)),
            w_o: Array2::zeros((u, u)),
            w_g: Array2::zeros((u, u)),
            biases: p.biases.as_ref().map(|_| CellBiases::zeros(u)),
        }
    }
}

/// Gradient accumulator for the dense head.
#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
}

/// Gradients for every parameter of the model.
#[derive(Debug, Clone)]
pub struct GradBuf {
    pub encoder: CellGrads,
    pub decoder: CellGrads,
    pub dense: DenseGrads,
}

impl GradBuf {
    pub fn zeros_like(model: &EdLstmModel) -> Self {
        Self {
            encoder: CellGrads::zeros_like(&model.encoder),
            decoder: CellGrads::zeros_like(&model.decoder),
            dense: DenseGrads {
                w1: Array2::zeros(model.dense.w1.dim()),
                b1: Array1::zeros(model.dense.b1.len()),
                w2: Array1::zeros(model.dense.w2.len()),
                b2: 0.0,
            },
        }
    }

    pub fn is_finite(&self) -> bool {
        grad_slices(self)
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn zero(&mut self) {
        for block in grad_slices_mut(self) {
            block.fill(0.0);
        }
    }

    /// Element-wise accumulation; sequence-major so that averaging a batch
    /// of identical sequences reproduces the single-sequence gradient
    /// bit-exactly.
    fn add(&mut self, other: &GradBuf) {
        for (a, b) in grad_slices_mut(self).into_iter().zip(grad_slices(other)) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

struct SeqCache {
    enc: Vec<StepCache>,
    dec: Vec<StepCache>,
    /// tanh activations of the dense hidden layer per decoder step.
    z1: Vec<Array1<f64>>,
    preds: Vec<f64>,
}

fn forward_cached(model: &EdLstmModel, input: &[f64], s: usize) -> SeqCache {
    let u = model.arch.hidden_units;
    let mut h = Array1::zeros(u);
    let mut c = Array1::zeros(u);
    let mut enc = Vec::with_capacity(input.len());
    for &x in input {
        let cache = step_full(x, &h, &c, &model.encoder);
        h = cache.h.clone();
        c = cache.c.clone();
        enc.push(cache);
    }
    let mut dec = Vec::with_capacity(s);
    let mut z1s = Vec::with_capacity(s);
    let mut preds = Vec::with_capacity(s);
    let mut x = 0.0;
    for _ in 0..s {
        let cache = step_full(x, &h, &c, &model.decoder);
        h = cache.h.clone();
        c = cache.c.clone();
        let (z1, y) = dense_forward(&model.dense, &h);
        preds.push(y);
        z1s.push(z1);
        dec.push(cache);
        x = y;
    }
    SeqCache {
        enc,
        dec,
        z1: z1s,
        preds,
    }
}

fn outer(col: &Array1<f64>, row: &Array1<f64>) -> Array2<f64> {
    let a = col.view().insert_axis(Axis(1));
    let b = row.view().insert_axis(Axis(0));
    a.dot(&b)
}

/// Backward through one cell step. `dh` and `dc_in` are the gradients
/// flowing into this step's output state; returns the gradients for the
/// previous state and the input scalar.
fn cell_backward(
    cache: &StepCache,
    dh: &Array1<f64>,
    dc_in: &Array1<f64>,
    p: &LstmCellParams,
    g: &mut CellGrads,
) -> (Array1<f64>, Array1<f64>, f64) {
    let d_o = dh * &cache.tanh_c;
    let dc = dc_in + &(dh * &cache.o * &cache.tanh_c.mapv(|t| 1.0 - t * t));
    let d_f = &dc * &cache.c_prev;
    let d_i = &dc * &cache.g;
    let d_g = &dc * &cache.i;
    let dc_prev = &dc * &cache.f;

    let da_i = &d_i * &cache.i * &cache.i.mapv(|v| 1.0 - v);
    let da_f = &d_f * &cache.f * &cache.f.mapv(|v| 1.0 - v);
    let da_o = &d_o * &cache.o * &cache.o.mapv(|v| 1.0 - v);
    let da_g = &d_g * &cache.g.mapv(|v| 1.0 - v * v);

    g.u_i.scaled_add(cache.x, &da_i);
    g.u_f.scaled_add(cache.x, &da_f);
    g.u_o.scaled_add(cache.x, &da_o);
    g.u_g.scaled_add(cache.x, &da_g);
    g.w_i += &outer(&cache.h_prev, &da_i);
    g.w_f += &outer(&cache.h_prev, &da_f);
    g.w_o += &outer(&cache.h_prev, &da_o);
    g.w_g += &outer(&cache.h_prev, &da_g);
    if let Some(b) = &mut g.biases {
        b.b_i += &da_i;
        b.b_f += &da_f;
        b.b_o += &da_o;
        b.b_g += &da_g;
    }

    let dh_prev =
        da_i.dot(&p.w_i.t()) + da_f.dot(&p.w_f.t()) + da_o.dot(&p.w_o.t()) + da_g.dot(&p.w_g.t());
    let dx = da_i.dot(&p.u_i) + da_f.dot(&p.u_f) + da_o.dot(&p.u_o) + da_g.dot(&p.u_g);
    (dh_prev, dc_prev, dx)
}

/// Backward for one sequence given per-step output gradients dL/dy_j.
fn sequence_backward(model: &EdLstmModel, cache: &SeqCache, dy: &[f64], grads: &mut GradBuf) {
    let u = model.arch.hidden_units;
    let mut dh_rec: Array1<f64> = Array1::zeros(u);
    let mut dc_rec: Array1<f64> = Array1::zeros(u);
    let mut dx_feedback = 0.0;

    for j in (0..cache.dec.len()).rev() {
        // total output gradient: the loss term plus the feedback edge into
        // the next decoder step's input
        let dy_total = dy[j] + dx_feedback;

        // dense head backward
        let z1 = &cache.z1[j];
        let h = &cache.dec[j].h;
        grads.dense.w2.scaled_add(dy_total, z1);
        grads.dense.b2 += dy_total;
        let dz1 = model.dense.w2.mapv(|w| w * dy_total);
        let da1 = &dz1 * &z1.mapv(|z| 1.0 - z * z);
        grads.dense.w1 += &outer(h, &da1);
        grads.dense.b1 += &da1;
        let dh = da1.dot(&model.dense.w1.t()) + &dh_rec;

        let (dh_prev, dc_prev, dx) = cell_backward(
            &cache.dec[j],
            &dh,
            &dc_rec,
            &model.decoder,
            &mut grads.decoder,
        );
        dh_rec = dh_prev;
        dc_rec = dc_prev;
        dx_feedback = dx; // reaches y_{j-1}; dropped at j = 0 (dummy input)
    }

    for t in (0..cache.enc.len()).rev() {
        let dh = dh_rec.clone();
        let (dh_prev, dc_prev, _dx) = cell_backward(
            &cache.enc[t],
            &dh,
            &dc_rec,
            &model.encoder,
            &mut grads.encoder,
        );
        dh_rec = dh_prev;
        dc_rec = dc_prev;
    }
}

/// Mean MSE of the model over a batch of (input, target) pairs, both in
/// normalized units.
pub fn batch_loss(model: &EdLstmModel, batch: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    let mut total = 0.0;
    for (input, target) in batch {
        let cache = forward_cached(model, input, target.len());
        total += super::mse_loss(&cache.preds, target)?;
    }
    Ok(total / batch.len() as f64)
}

/// Analytic gradients of the batch-mean MSE with respect to every model
/// parameter. Returns the loss alongside.
pub fn backward(model: &EdLstmModel, batch: &[(Vec<f64>, Vec<f64>)]) -> Result<(f64, GradBuf)> {
    if batch.is_empty() {
        return Err(Error::Dataset("empty batch".into()));
    }
    let mut grads = GradBuf::zeros_like(model);
    let mut scratch = GradBuf::zeros_like(model);
    let b = batch.len() as f64;
    let mut total = 0.0;
    for (input, target) in batch {
        let s = target.len();
        let cache = forward_cached(model, input, s);
        total += super::mse_loss(&cache.preds, target)?;
        let dy: Vec<f64> = cache
            .preds
            .iter()
            .zip(target)
            .map(|(y, t)| 2.0 * (y - t) / (s as f64 * b))
            .collect();
        scratch.zero();
        sequence_backward(model, &cache, &dy, &mut scratch);
        grads.add(&scratch);
    }
    let loss = total / b;
    if !loss.is_finite() || !grads.is_finite() {
        return Err(Error::NumericDomain(
            "non-finite loss or gradient in backward pass".into(),
        ));
    }
    Ok((loss, grads))
}

// Fixed parameter ordering shared by the Adam state, the gradients, and
// the model serializer.
fn cell_param_slices_mut(p: &mut LstmCellParams) -> Vec<&mut [f64]> {
    let mut v: Vec<&mut [f64]> = vec![
        p.u_i.as_slice_mut().unwrap(),
        p.u_f.as_slice_mut().unwrap(),
        p.u_o.as_slice_mut().unwrap(),
        p.u_g.as_slice_mut().unwrap(),
        p.w_i.as_slice_mut().unwrap(),
        p.w_f.as_slice_mut().unwrap(),
        p.w_o.as_slice_mut().unwrap(),
        p.w_g.as_slice_mut().unwrap(),
    ];
    if let Some(b) = &mut p.biases {
        v.push(b.b_i.as_slice_mut().unwrap());
        v.push(b.b_f.as_slice_mut().unwrap());
        v.push(b.b_o.as_slice_mut().unwrap());
        v.push(b.b_g.as_slice_mut().unwrap());
    }
    v
}

fn cell_grad_slices_mut(g: &mut CellGrads) -> Vec<&mut [f64]> {
    let mut v: Vec<&mut [f64]> = vec![
        g.u_i.as_slice_mut().unwrap(),
        g.u_f.as_slice_mut().unwrap(),
        g.u_o.as_slice_mut().unwrap(),
        g.u_g.as_slice_mut().unwrap(),
        g.w_i.as_slice_mut().unwrap(),
        g.w_f.as_slice_mut().unwrap(),
        g.w_o.as_slice_mut().unwrap(),
        g.w_g.as_slice_mut().unwrap(),
    ];
    if let Some(b) = &mut g.biases {
        v.push(b.b_i.as_slice_mut().unwrap());
        v.push(b.b_f.as_slice_mut().unwrap());
        v.push(b.b_o.as_slice_mut().unwrap());
        v.push(b.b_g.as_slice_mut().unwrap());
    }
    v
}

fn grad_slices_mut(g: &mut GradBuf) -> Vec<&mut [f64]> {
    let mut v = cell_grad_slices_mut(&mut g.encoder);
    v.extend(cell_grad_slices_mut(&mut g.decoder));
    v.push(g.dense.w1.as_slice_mut().unwrap());
    v.push(g.dense.b1.as_slice_mut().unwrap());
    v.push(g.dense.w2.as_slice_mut().unwrap());
    v.push(std::slice::from_mut(&mut g.dense.b2));
    v
}

fn cell_grad_slices(g: &CellGrads) -> Vec<&[f64]> {
    let mut v: Vec<&[f64]> = vec![
        g.u_i.as_slice().unwrap(),
        g.u_f.as_slice().unwrap(),
        g.u_o.as_slice().unwrap(),
        g.u_g.as_slice().unwrap(),
        g.w_i.as_slice().unwrap(),
        g.w_f.as_slice().unwrap(),
        g.w_o.as_slice().unwrap(),
        g.w_g.as_slice().unwrap(),
    ];
    if let Some(b) = &g.biases {
        v.push(b.b_i.as_slice().unwrap());
        v.push(b.b_f.as_slice().unwrap());
        v.push(b.b_o.as_slice().unwrap());
        v.push(b.b_g.as_slice().unwrap());
    }
    v
}

pub(crate) fn param_slices_mut(model: &mut EdLstmModel) -> Vec<&mut [f64]> {
    let mut v = cell_param_slices_mut(&mut model.encoder);
    v.extend(cell_param_slices_mut(&mut model.decoder));
    v.push(model.dense.w1.as_slice_mut().unwrap());
    v.push(model.dense.b1.as_slice_mut().unwrap());
    v.push(model.dense.w2.as_slice_mut().unwrap());
    v.push(std::slice::from_mut(&mut model.dense.b2));
    v
}

fn grad_slices(g: &GradBuf) -> Vec<&[f64]> {
    let mut v = cell_grad_slices(&g.encoder);
    v.extend(cell_grad_slices(&g.decoder));
    v.push(g.dense.w1.as_slice().unwrap());
    v.push(g.dense.b1.as_slice().unwrap());
    v.push(g.dense.w2.as_slice().unwrap());
    v.push(std::slice::from_ref(&g.dense.b2));
    v
}

/// First/second moment accumulators for Adam, one pair per parameter block.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(model: &EdLstmModel) -> Self {
        let sizes: Vec<usize> = grad_slices(&GradBuf::zeros_like(model))
            .iter()
            .map(|s| s.len())
            .collect();
        Self {
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One bias-corrected Adam update over every parameter.
pub fn adam_update(
    model: &mut EdLstmModel,
    grads: &GradBuf,
    state: &mut AdamState,
    config: &TrainConfig,
) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    let params = param_slices_mut(model);
    let grads = grad_slices(grads);
    for ((p_block, g_block), (m_block, v_block)) in params
        .into_iter()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for k in 0..p_block.len() {
            let g = g_block[k];
            m_block[k] = config.beta1 * m_block[k] + (1.0 - config.beta1) * g;
            v_block[k] = config.beta2 * v_block[k] + (1.0 - config.beta2) * g * g;
            let m_hat = m_block[k] / bc1;
            let v_hat = v_block[k] / bc2;
            p_block[k] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
}

/// Trains the model on the dataset's training rows with shuffled
/// mini-batches, recording train/validation MSE per epoch and returning
/// the checkpoint with the best validation loss.
pub fn train(
    mut model: EdLstmModel,
    ds: &SequenceDataset,
    config: &TrainConfig,
) -> Result<(EdLstmModel, TrainHistory)> {
    model.validate()?;
    let split = ds
        .split
        .as_ref()
        .ok_or_else(|| Error::Dataset("split the dataset before training".into()))?;
    let norm = ds
        .normalizer
        .as_ref()
        .ok_or_else(|| Error::Dataset("fit a normalizer before training".into()))?;
    ds.audit_no_leakage()?;

    let normalized: Vec<(Vec<f64>, Vec<f64>)> = (0..ds.len())
        .map(|row| {
            (
                norm.apply_slice(ds.input_of(row)),
                norm.apply_slice(ds.target_of(row)),
            )
        })
        .collect();
    let train_rows: Vec<usize> = split.train_proper().collect();
    let val_rows: Vec<usize> = split.val.clone().collect();
    if train_rows.is_empty() || val_rows.is_empty() {
        return Err(Error::Dataset(
            "training or validation range is empty".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut adam = AdamState::new(&model);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, EdLstmModel)> = None;
    let mut order = train_rows.clone();

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);

        let mut train_sq = 0.0;
        for chunk in order.chunks(config.batch_size.max(1)) {
            let batch: Vec<(Vec<f64>, Vec<f64>)> =
                chunk.iter().map(|&row| normalized[row].clone()).collect();
            let (loss, grads) = match backward(&model, &batch) {
                Ok(ok) => ok,
                Err(Error::NumericDomain(reason)) => {
                    return Err(Error::TrainingDiverged {
                        epoch,
                        reason,
                        history: Box::new(history),
                    })
                }
                Err(e) => return Err(e),
            };
            train_sq += loss * batch.len() as f64;
            adam_update(&mut model, &grads, &mut adam, config);
        }
        let train_mse = train_sq / train_rows.len() as f64;

        let val_batch: Vec<(Vec<f64>, Vec<f64>)> = val_rows
            .iter()
            .map(|&row| normalized[row].clone())
            .collect();
        let val_mse = batch_loss(&model, &val_batch)?;

        history.epochs.push(EpochStats {
            epoch,
            train_mse,
            val_mse,
            seconds: started.elapsed().as_secs_f64(),
        });

        if !train_mse.is_finite() || !val_mse.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                reason: format!("train_mse = {train_mse}, val_mse = {val_mse}"),
                history: Box::new(history),
            });
        }

        if best.as_ref().is_none_or(|(b, _)| val_mse < *b) {
            let mut snapshot = model.clone();
            snapshot.trained_future_len = Some(ds.spec.future_len);
            snapshot.training_config = Some(config.clone());
            best = Some((val_mse, snapshot));
            history.best_epoch = epoch;
        }
    }

    let (_, mut best_model) = best.expect("at least one epoch ran");
    best_model.trained_future_len = Some(ds.spec.future_len);
    best_model.training_config = Some(config.clone());
    Ok((best_model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{self, NormalizerKind, Provenance, WindowSpec};
    use crate::forecaster::{init_model, ModelArch};
    use approx::assert_relative_eq;

    fn tiny_model(use_biases: bool) -> EdLstmModel {
        let arch = ModelArch {
            hidden_units: 3,
            dense_units: 4,
            input_features: 1,
            use_biases,
        };
        init_model(&arch, 1234)
    }

    fn tiny_batch() -> Vec<(Vec<f64>, Vec<f64>)> {
        // k = 4 (five inputs), s = 3
        vec![
            (vec![0.1, -0.3, 0.5, 0.2, -0.1], vec![0.3, 0.1, -0.2]),
            (vec![-0.4, 0.2, 0.0, 0.6, 0.3], vec![-0.1, 0.4, 0.2]),
        ]
    }

    /// Central finite differences over every parameter of the model.
    fn finite_difference_check(mut model: EdLstmModel, batch: &[(Vec<f64>, Vec<f64>)]) {
        let (_, grads) = backward(&model, batch).unwrap();
        let analytic: Vec<Vec<f64>> = grad_slices(&grads).iter().map(|s| s.to_vec()).collect();
        let eps = 1e-5;
        let n_blocks = analytic.len();
        let mut worst = 0.0f64;
        for block in 0..n_blocks {
            for k in 0..analytic[block].len() {
                let orig = param_slices_mut(&mut model)[block][k];
                param_slices_mut(&mut model)[block][k] = orig + eps;
                let up = batch_loss(&model, batch).unwrap();
                param_slices_mut(&mut model)[block][k] = orig - eps;
                let down = batch_loss(&model, batch).unwrap();
                param_slices_mut(&mut model)[block][k] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let a = analytic[block][k];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
                assert!(
                    rel < 1e-4,
                    "gradient mismatch at block {block} index {k}: analytic {a:e}, numeric {numeric:e}, rel {rel:e}"
                );
            }
        }
        assert!(
            worst > 0.0,
            "all gradients zero; the check exercised nothing"
        );
    }

    #[test]
    fn gradients_match_finite_differences() {
        finite_difference_check(tiny_model(false), &tiny_batch());
    }

    #[test]
    fn gradients_match_finite_differences_with_biases() {
        finite_difference_check(tiny_model(true), &tiny_batch());
    }

    #[test]
    fn zero_loss_batch_gives_zero_gradients() {
        let model = tiny_model(false);
        let input = vec![0.1, -0.3, 0.5, 0.2, -0.1];
        let preds = super::forward_cached(&model, &input, 3).preds;
        let batch = vec![(input, preds)];
        let (loss, grads) = backward(&model, &batch).unwrap();
        assert_eq!(loss, 0.0);
        for block in grad_slices(&grads) {
            assert!(block.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn duplicated_sample_keeps_gradient_unchanged() {
        let model = tiny_model(false);
        let single = vec![tiny_batch()[0].clone()];
        let doubled = vec![tiny_batch()[0].clone(), tiny_batch()[0].clone()];
        let (l1, g1) = backward(&model, &single).unwrap();
        let (l2, g2) = backward(&model, &doubled).unwrap();
        assert_eq!(l1, l2);
        for (a, b) in grad_slices(&g1).iter().zip(grad_slices(&g2).iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_params_unchanged() {
        let mut model = tiny_model(false);
        let before = model.clone();
        let grads = GradBuf::zeros_like(&model);
        let mut state = AdamState::new(&model);
        let config = TrainConfig {
            learning_rate: 0.1,
            ..Default::default()
        };
        adam_update(&mut model, &grads, &mut state, &config);
        assert_eq!(model, before);
    }

    #[test]
    fn adam_first_and_second_steps_match_hand_evaluation() {
        // scalar Adam: p=1, lr=0.1, g1=0.5, g2=-0.25 (mpmath hand rolls)
        let mut model = tiny_model(false);
        let config = TrainConfig {
            learning_rate: 0.1,
            ..Default::default()
        };
        let mut state = AdamState::new(&model);

        model.dense.b2 = 1.0;
        let mut grads = GradBuf::zeros_like(&model);
        grads.dense.b2 = 0.5;
        adam_update(&mut model, &grads, &mut state, &config);
        assert_relative_eq!(model.dense.b2, 0.90000000199999996, epsilon = 1e-15);

        grads.dense.b2 = -0.25;
        adam_update(&mut model, &grads, &mut state, &config);
        assert_relative_eq!(model.dense.b2, 0.87336629870784616256, epsilon = 1e-12);
    }

    #[test]
    fn adam_first_step_approximates_signed_lr() {
        let mut model = tiny_model(false);
        let config = TrainConfig {
            learning_rate: 1e-3,
            ..Default::default()
        };
        let mut state = AdamState::new(&model);
        let before = model.dense.b2;
        let mut grads = GradBuf::zeros_like(&model);
        grads.dense.b2 = 0.7;
        adam_update(&mut model, &grads, &mut state, &config);
        // first step: m̂ = g, v̂ = g² → update ≈ -lr·sign(g)
        assert_relative_eq!(before - model.dense.b2, 1e-3, max_relative = 1e-4);
    }

    fn toy_dataset() -> SequenceDataset {
        let series: Vec<f64> = (0..60)
            .map(|i| 0.5 + 0.3 * (i as f64 * 0.37).sin())
            .collect();
        let spec = WindowSpec {
            tau_minutes: 90.0,
            past_len: 4,
            future_len: 3,
            stride: 1,
        };
        let mut ds = dataset::windowize(&series, &spec, Provenance::of_series(&series, 0)).unwrap();
        dataset::split(&mut ds, 0.8, 0.2).unwrap();
        dataset::fit_normalizer(&mut ds, NormalizerKind::MinMax).unwrap();
        ds
    }

    #[test]
    fn single_batch_step_decreases_loss() {
        let model = tiny_model(false);
        let batch = tiny_batch();
        let config = TrainConfig {
            learning_rate: 1e-3,
            ..Default::default()
        };
        let mut state = AdamState::new(&model);
        let mut model = model;
        let (before, grads) = backward(&model, &batch).unwrap();
        adam_update(&mut model, &grads, &mut state, &config);
        let after = batch_loss(&model, &batch).unwrap();
        assert!(after < before, "loss did not decrease: {before} -> {after}");
    }

    #[test]
    fn zero_learning_rate_freezes_everything() {
        let ds = toy_dataset();
        let model = tiny_model(false);
        let config = TrainConfig {
            learning_rate: 0.0,
            batch_size: 4,
            epochs: 3,
            rng_seed: 5,
            ..Default::default()
        };
        let initial = model.clone();
        let (trained, history) = train(model, &ds, &config).unwrap();
        assert_eq!(trained.encoder, initial.encoder);
        assert_eq!(trained.decoder, initial.decoder);
        assert_eq!(trained.dense, initial.dense);
        let first = history.epochs.first().unwrap();
        let last = history.epochs.last().unwrap();
        assert_eq!(first.train_mse, last.train_mse);
        assert_eq!(first.val_mse, last.val_mse);
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let ds = toy_dataset();
        let config = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 8,
            epochs: 40,
            rng_seed: 7,
            ..Default::default()
        };
        let (m1, h1) = train(init_model(&tiny_model(false).arch, 3), &ds, &config).unwrap();
        let (m2, h2) = train(init_model(&tiny_model(false).arch, 3), &ds, &config).unwrap();
        assert_eq!(m1, m2);
        // per-epoch losses are bit-identical; wall clock is not compared
        assert_eq!(h1.best_epoch, h2.best_epoch);
        for (a, b) in h1.epochs.iter().zip(&h2.epochs) {
            assert_eq!(a.train_mse, b.train_mse);
            assert_eq!(a.val_mse, b.val_mse);
        }
        let first = h1.epochs.first().unwrap().val_mse;
        let best = h1.epochs[h1.best_epoch - 1].val_mse;
        assert!(
            best < first,
            "validation loss never improved: {first} -> {best}"
        );
        assert_eq!(m1.trained_future_len, Some(3));
    }

    #[test]
    fn divergence_reports_history() {
        let ds = toy_dataset();
        // absurd learning rate forces non-finite parameters quickly
        let config = TrainConfig {
            learning_rate: 1e200,
            batch_size: 8,
            epochs: 50,
            rng_seed: 7,
            ..Default::default()
        };
        match train(init_model(&tiny_model(false).arch, 3), &ds, &config) {
            Err(Error::TrainingDiverged { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
