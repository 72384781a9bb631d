//! Encoder-decoder LSTM forecaster, implemented from scratch.
//!
//! One LSTM cell encodes the k+1 past observations into final hidden and
//! cell states; a second cell, seeded with those states and a zero dummy
//! input, recursively emits s future estimates, each step feeding its own
//! prediction back as the next input. Gates follow the bias-free recursive
//! equations
//!
//!   i = σ(x·U_i + h·W_i)        f = σ(x·U_f + h·W_f)
//!   o = σ(x·U_o + h·W_o)        c̃ = tanh(x·U_g + h·W_g)
//!   c = f ∘ c_prev + i ∘ c̃      h = tanh(c) ∘ o
//!
//! with optional bias terms behind a config flag. The decoder output runs
//! through a time-distributed dense head (u → 20 tanh units → 1 linear).
//! Training is mini-batch Adam on MSE with full backpropagation through
//! time, including the gradient flow through the decoder feedback path.

mod io;
mod train;

pub use io::{read_history_file, read_model_file, write_history_file, write_model_file};
pub use train::{
    adam_update, backward, batch_loss, train, AdamState, CellGrads, DenseGrads, GradBuf,
};

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Normalizer, SequenceDataset};
use crate::error::{Error, Result};

/// Architecture knobs of the encoder-decoder model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArch {
    /// Hidden units u in both cells.
    pub hidden_units: usize,
    /// Units in the dense head's hidden layer.
    pub dense_units: usize,
    /// Input features d; the BER forecaster is single-feature.
    pub input_features: usize,
    /// Adds bias vectors to the four gate pre-activations.
    pub use_biases: bool,
}

impl Default for ModelArch {
    fn default() -> Self {
        Self {
            hidden_units: 30,
            dense_units: 20,
            input_features: 1,
            use_biases: false,
        }
    }
}

/// Optional gate biases.
#[derive(Debug, Clone, PartialEq)]
pub struct CellBiases {
    pub b_i: Array1<f64>,
    pub b_f: Array1<f64>,
    pub b_o: Array1<f64>,
    pub b_g: Array1<f64>,
}

impl CellBiases {
    fn zeros(u: usize) -> Self {
        Self {
            b_i: Array1::zeros(u),
            b_f: Array1::zeros(u),
            b_o: Array1::zeros(u),
            b_g: Array1::zeros(u),
        }
    }
}

/// Parameters of one LSTM cell: input transforms U_* (d×u, stored as
/// vectors for the single-feature case) and recurrent transforms W_* (u×u).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    pub u_i: Array1<f64>,
    pub u_f: Array1<f64>,
    pub u_o: Array1<f64>,
    pub u_g: Array1<f64>,
    pub w_i: Array2<f64>,
    pub w_f: Array2<f64>,
    pub w_o: Array2<f64>,
    pub w_g: Array2<f64>,
    pub biases: Option<CellBiases>,
    pub hidden_units: usize,
    pub input_features: usize,
}

impl LstmCellParams {
    pub fn validate(&self) -> Result<()> {
        let u = self.hidden_units;
        if self.input_features != 1 {
            return Err(Error::ShapeMismatch(format!(
                "single-feature cells only (d = 1), got d = {}",
                self.input_features
            )));
        }
        for (name, v) in [
            ("u_i", &self.u_i),
            ("u_f", &self.u_f),
            ("u_o", &self.u_o),
            ("u_g", &self.u_g),
        ] {
            if v.len() != u {
                return Err(Error::ShapeMismatch(format!(
                    "{name} has length {}, want {u}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NumericDomain(format!(
                    "{name} holds non-finite values"
                )));
            }
        }
        for (name, m) in [
            ("w_i", &self.w_i),
            ("w_f", &self.w_f),
            ("w_o", &self.w_o),
            ("w_g", &self.w_g),
        ] {
            if m.dim() != (u, u) {
                return Err(Error::ShapeMismatch(format!(
                    "{name} is {:?}, want ({u}, {u})",
                    m.dim()
                )));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::NumericDomain(format!(
                    "{name} holds non-finite values"
                )));
            }
        }
        Ok(())
    }
}

/// Dense head applied to each decoder hidden state: affine to
/// `dense_units` with tanh, then affine to a single linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseHead {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
}

/// Optimization hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            batch_size: 16,
            epochs: 500,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            rng_seed: 42,
        }
    }
}

/// Per-epoch record of the training run.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose checkpoint was returned.
    pub best_epoch: usize,
}

/// The full encoder-decoder model.
#[derive(Debug, Clone, PartialEq)]
pub struct EdLstmModel {
    pub arch: ModelArch,
    pub encoder: LstmCellParams,
    pub decoder: LstmCellParams,
    pub dense: DenseHead,
    /// Horizon the model was trained for; decoding past it is permitted
    /// but flagged.
    pub trained_future_len: Option<usize>,
    /// Hyperparameters of the run that produced this checkpoint.
    pub training_config: Option<TrainConfig>,
    pub init_seed: u64,
}

impl EdLstmModel {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        if self.encoder.hidden_units != self.decoder.hidden_units {
            return Err(Error::ShapeMismatch(
                "encoder and decoder must share the hidden size (states are handed over)".into(),
            ));
        }
        if self.dense.w1.dim() != (self.arch.hidden_units, self.arch.dense_units) {
            return Err(Error::ShapeMismatch(format!(
                "dense w1 is {:?}, want ({}, {})",
                self.dense.w1.dim(),
                self.arch.hidden_units,
                self.arch.dense_units
            )));
        }
        if self.dense.b1.len() != self.arch.dense_units
            || self.dense.w2.len() != self.arch.dense_units
        {
            return Err(Error::ShapeMismatch(
                "dense head vector sizes inconsistent".into(),
            ));
        }
        Ok(())
    }
}

fn init_cell(arch: &ModelArch, rng: &mut ChaCha8Rng) -> LstmCellParams {
    let u = arch.hidden_units;
    let a = 1.0 / (u as f64).sqrt();
    let mut vec = |n: usize| Array1::from_shape_fn(n, |_| rng.random_range(-a..a));
    let u_i = vec(u);
    let u_f = vec(u);
    let u_o = vec(u);
    let u_g = vec(u);
    let mut mat = |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| rng.random_range(-a..a));
    let w_i = mat(u, u);
    let w_f = mat(u, u);
    let w_o = mat(u, u);
    let w_g = mat(u, u);
    LstmCellParams {
        u_i,
        u_f,
        u_o,
        u_g,
        w_i,
        w_f,
        w_o,
        w_g,
        biases: arch.use_biases.then(|| CellBiases::zeros(u)),
        hidden_units: u,
        input_features: arch.input_features,
    }
}

/// Fresh model with weights drawn uniformly from [-1/√u, 1/√u] in a fixed
/// order (encoder gates, decoder gates, dense head), so a seed pins every
/// parameter.
pub fn init_model(arch: &ModelArch, seed: u64) -> EdLstmModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = arch.hidden_units;
    let a = 1.0 / (u as f64).sqrt();
    let encoder = init_cell(arch, &mut rng);
    let decoder = init_cell(arch, &mut rng);
    let w1 = Array2::from_shape_fn((u, arch.dense_units), |_| rng.random_range(-a..a));
    let w2 = Array1::from_shape_fn(arch.dense_units, |_| rng.random_range(-a..a));
    let dense = DenseHead {
        w1,
        b1: Array1::zeros(arch.dense_units),
        w2,
        b2: 0.0,
    };
    EdLstmModel {
        arch: arch.clone(),
        encoder,
        decoder,
        dense,
        trained_future_len: None,
        training_config: None,
        init_seed: seed,
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Everything one step produces, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    pub x: f64,
    pub h_prev: Array1<f64>,
    pub c_prev: Array1<f64>,
    pub i: Array1<f64>,
    pub f: Array1<f64>,
    pub o: Array1<f64>,
    pub g: Array1<f64>,
    pub tanh_c: Array1<f64>,
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

pub(crate) fn step_full(
    x: f64,
    h_prev: &Array1<f64>,
    c_prev: &Array1<f64>,
    p: &LstmCellParams,
) -> StepCache {
    let mut a_i = &p.u_i * x + &h_prev.dot(&p.w_i);
    let mut a_f = &p.u_f * x + &h_prev.dot(&p.w_f);
    let mut a_o = &p.u_o * x + &h_prev.dot(&p.w_o);
    let mut a_g = &p.u_g * x + &h_prev.dot(&p.w_g);
    if let Some(b) = &p.biases {
        a_i += &b.b_i;
        a_f += &b.b_f;
        a_o += &b.b_o;
        a_g += &b.b_g;
    }
    let i = a_i.mapv(sigmoid);
    let f = a_f.mapv(sigmoid);
    let o = a_o.mapv(sigmoid);
    let g = a_g.mapv(f64::tanh);
    let c = &f * c_prev + &i * &g;
    let tanh_c = c.mapv(f64::tanh);
    let h = &tanh_c * &o;
    StepCache {
        x,
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        i,
        f,
        o,
        g,
        tanh_c,
        h,
        c,
    }
}

/// One LSTM cell update: returns the new hidden and cell states.
pub fn lstm_step(
    x: f64,
    h_prev: &Array1<f64>,
    c_prev: &Array1<f64>,
    p: &LstmCellParams,
) -> Result<(Array1<f64>, Array1<f64>)> {
    if h_prev.len() != p.hidden_units || c_prev.len() != p.hidden_units {
        return Err(Error::ShapeMismatch(format!(
            "state length {} does not match {} hidden units",
            h_prev.len(),
            p.hidden_units
        )));
    }
    let s = step_full(x, h_prev, c_prev, p);
    Ok((s.h, s.c))
}

/// Folds the input sequence through the cell from zero states and returns
/// the final (h, c) summary.
pub fn encode(x_seq: &[f64], p: &LstmCellParams) -> Result<(Array1<f64>, Array1<f64>)> {
    if x_seq.is_empty() {
        return Err(Error::Dataset("cannot encode an empty sequence".into()));
    }
    let mut h = Array1::zeros(p.hidden_units);
    let mut c = Array1::zeros(p.hidden_units);
    for &x in x_seq {
        let (nh, nc) = lstm_step(x, &h, &c, p)?;
        h = nh;
        c = nc;
    }
    Ok((h, c))
}

pub(crate) fn dense_forward(dense: &DenseHead, h: &Array1<f64>) -> (Array1<f64>, f64) {
    let a1 = h.dot(&dense.w1) + &dense.b1;
    let z1 = a1.mapv(f64::tanh);
    let y = z1.dot(&dense.w2) + dense.b2;
    (z1, y)
}

/// Recursive decoding from the encoder summary: the first input is the
/// zero dummy, every later input is the previous prediction, and each
/// step's output is the dense head applied to the hidden state (linear
/// output activation).
pub fn decode(
    h: &Array1<f64>,
    c: &Array1<f64>,
    s: usize,
    p: &LstmCellParams,
    dense: &DenseHead,
) -> Result<Vec<f64>> {
    if s == 0 {
        return Err(Error::InvalidParameter(
            "decode horizon must be >= 1".into(),
        ));
    }
    let mut h = h.clone();
    let mut c = c.clone();
    let mut x = 0.0; // dummy input x_0
    let mut out = Vec::with_capacity(s);
    for _ in 0..s {
        let (nh, nc) = lstm_step(x, &h, &c, p)?;
        h = nh;
        c = nc;
        let (_, y) = dense_forward(dense, &h);
        out.push(y);
        x = y;
    }
    Ok(out)
}

/// Mean squared error over aligned prediction/target slices.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "prediction length {} vs target length {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::ShapeMismatch("empty prediction".into()));
    }
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

/// Forecast in normalized space from a normalized input window.
pub fn predict_normalized(model: &EdLstmModel, input: &[f64], s: usize) -> Result<Vec<f64>> {
    let (h, c) = encode(input, &model.encoder)?;
    decode(&h, &c, s, &model.decoder, &model.dense)
}

/// Full prediction: normalizes the raw observation window, encodes,
/// decodes `s` steps, and maps the estimates back to BER units.
pub fn predict(
    model: &EdLstmModel,
    normalizer: &Normalizer,
    past_raw: &[f64],
    s: usize,
) -> Result<Vec<f64>> {
    if let Some(trained) = model.trained_future_len {
        if s > trained {
            log::warn!(
                "decoding {s} steps from a model trained for {trained}; tail is extrapolated"
            );
        }
    }
    let input = normalizer.apply_slice(past_raw);
    let out = predict_normalized(model, &input, s)?;
    Ok(normalizer.invert_slice(&out))
}

/// Per-sequence loss profile over a dataset range.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternLoss {
    /// Row index within the dataset.
    pub index: usize,
    /// MSE in normalized units.
    pub mse_norm: f64,
    /// MSE in raw BER units.
    pub mse_ber: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_pattern: Vec<PatternLoss>,
    pub mean_norm: f64,
    pub mean_ber: f64,
}

/// Evaluates the model over a contiguous row range of the dataset,
/// reporting per-pattern and aggregate MSE in both unit systems.
pub fn evaluate(
    model: &EdLstmModel,
    ds: &SequenceDataset,
    range: std::ops::Range<usize>,
) -> Result<EvalReport> {
    if range.is_empty() || range.end > ds.len() {
        return Err(Error::Dataset(format!(
            "evaluation range {range:?} invalid for {} rows",
            ds.len()
        )));
    }
    let norm = ds
        .normalizer
        .as_ref()
        .ok_or_else(|| Error::Dataset("dataset has no fitted normalizer".into()))?;
    let s = ds.spec.future_len;
    let mut per_pattern = Vec::with_capacity(range.len());
    let (mut sum_norm, mut sum_ber) = (0.0, 0.0);
    for row in range.clone() {
        let input = norm.apply_slice(ds.input_of(row));
        let target_stored = ds.target_of(row);
        let target_norm = norm.apply_slice(target_stored);
        let pred_norm = predict_normalized(model, &input, s)?;
        let mse_norm = mse_loss(&pred_norm, &target_norm)?;
        // back to BER units: denormalize and undo the target representation
        let pred_ber: Vec<f64> = norm
            .invert_slice(&pred_norm)
            .iter()
            .map(|&v| ds.transform.inverse(v))
            .collect();
        let target_ber: Vec<f64> = target_stored
            .iter()
            .map(|&v| ds.transform.inverse(v))
            .collect();
        let mse_ber = mse_loss(&pred_ber, &target_ber)?;
        sum_norm += mse_norm;
        sum_ber += mse_ber;
        per_pattern.push(PatternLoss {
            index: row,
            mse_norm,
            mse_ber,
        });
    }
    let n = per_pattern.len() as f64;
    Ok(EvalReport {
        per_pattern,
        mean_norm: sum_norm / n,
        mean_ber: sum_ber / n,
    })
}

/// Multi-step forecasting interface used by the trigger policies.
pub trait SequenceForecaster {
    /// Forecast `horizon` values following position `t`, given the series
    /// observed so far (`series[..=t]` for honest forecasters).
    fn forecast(&self, series: &[f64], t: usize, horizon: usize) -> Result<Vec<f64>>;
    /// Observations needed before the first forecast (k+1 for the model).
    fn min_history(&self) -> usize;
    /// Longest horizon this forecaster was built for, if bounded.
    fn horizon_limit(&self) -> Option<usize> {
        None
    }
}

/// The trained model operating on raw BER observations.
pub struct ModelForecaster<'a> {
    pub model: &'a EdLstmModel,
    pub normalizer: &'a Normalizer,
    pub transform: crate::dataset::TargetTransform,
    pub past_len: usize,
}

impl SequenceForecaster for ModelForecaster<'_> {
    fn forecast(&self, series: &[f64], t: usize, horizon: usize) -> Result<Vec<f64>> {
        if t + 1 < self.min_history() {
            return Err(Error::Dataset(format!(
                "forecast at position {t} needs {} past observations",
                self.min_history()
            )));
        }
        let start = t + 1 - self.min_history();
        let window = self.transform.forward_slice(&series[start..=t]);
        let out = predict(self.model, self.normalizer, &window, horizon)?;
        Ok(out.iter().map(|&v| self.transform.inverse(v)).collect())
    }

    fn min_history(&self) -> usize {
        self.past_len + 1
    }

    fn horizon_limit(&self) -> Option<usize> {
        self.model.trained_future_len
    }
}

/// Test oracle that reads the true future off the series; the upper bound
/// for any forecaster.
pub struct OracleForecaster;

impl SequenceForecaster for OracleForecaster {
    fn forecast(&self, series: &[f64], t: usize, horizon: usize) -> Result<Vec<f64>> {
        let end = (t + 1 + horizon).min(series.len());
        Ok(series[t + 1..end].to_vec())
    }

    fn min_history(&self) -> usize {
        1
    }
}
