//! Two-layer MLP probe: `σ(W2 · LN(tanh(W1·a + b1)) + b2)`.
//!
//! Dropout is applied to the input and to the normalized hidden layer during
//! training. Training minimizes class-weighted softmax cross-entropy on the
//! logits `z = W2·h + b2`; the logistic of `z` is only used for reported
//! scores, and predictions take the argmax over `z`.

mod checkpoint;
mod train;

use std::fmt::Debug;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::UnifiedLabel;
use crate::repr::PoolingConfig;

pub use checkpoint::{log_path, read_checkpoint, write_checkpoint};
pub use train::{
    evaluate, predict, train, AdamW, EpochLog, Evaluation, TrainConfig, TrainingLog,
};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Floating-point type the probe runs in: f32 for training, f64 for
/// gradient checks.
pub trait Real:
    Float + FromPrimitive + ScalarOperand + ndarray::LinalgScalar + Debug + Send + Sync + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite constant")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// What the probe's input vector contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeInput {
    pub layers: usize,
    pub heads: usize,
    pub pooling: PoolingConfig,
    /// `Some(l)` for a layer-wise probe over layer `l` only.
    pub layer: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel<T: Real = f32> {
    /// (hidden, input)
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub ln_gain: Array1<T>,
    pub ln_bias: Array1<T>,
    /// (classes, hidden)
    pub w2: Array2<T>,
    pub b2: Array1<T>,
    pub input_dropout: f64,
    pub hidden_dropout: f64,
    pub classes: Vec<UnifiedLabel>,
    pub input: ProbeInput,
}

/// Gradients (or optimizer moments) with the same shapes as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T: Real> {
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub ln_gain: Array1<T>,
    pub ln_bias: Array1<T>,
    pub w2: Array2<T>,
    pub b2: Array1<T>,
}

impl<T: Real> Grads<T> {
    pub fn zeros_like(m: &ProbeModel<T>) -> Self {
        Grads {
            w1: Array2::zeros(m.w1.raw_dim()),
            b1: Array1::zeros(m.b1.raw_dim()),
            ln_gain: Array1::zeros(m.ln_gain.raw_dim()),
            ln_bias: Array1::zeros(m.ln_bias.raw_dim()),
            w2: Array2::zeros(m.w2.raw_dim()),
            b2: Array1::zeros(m.b2.raw_dim()),
        }
    }

    /// Parameter blocks in checkpoint order: W1, b1, gain, bias, W2, b2.
    pub fn blocks(&self) -> [&[T]; 6] {
        [
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.ln_gain.as_slice().unwrap(),
            self.ln_bias.as_slice().unwrap(),
            self.w2.as_slice().unwrap(),
            self.b2.as_slice().unwrap(),
        ]
    }
}

/// Dropout keep-masks, already scaled by `1/(1-p)`.
#[derive(Debug, Clone)]
pub struct DropoutMasks<T: Real> {
    pub input: Array2<T>,
    pub hidden: Array2<T>,
}

impl<T: Real> DropoutMasks<T> {
    pub fn sample<R: Rng>(rng: &mut R, batch: usize, input: usize, hidden: usize, p_in: f64, p_hidden: f64) -> Self {
        let mut mask = |rows: usize, cols: usize, p: f64| {
            let keep = T::from_f64_lossy(1.0 / (1.0 - p));
            // An element is dropped when a uniform u32 falls below p·2³².
            let threshold = (p * 4_294_967_296.0) as u64;
            let mut draws = vec![0u32; rows * cols];
            rng.fill(&mut draws[..]);
            let data = draws
                .into_iter()
                .map(|r| if (r as u64) < threshold { T::zero() } else { keep })
                .collect();
            Array2::from_shape_vec((rows, cols), data).unwrap()
        };
        let input = mask(batch, input, p_in);
        let hidden = mask(batch, hidden, p_hidden);
        DropoutMasks { input, hidden }
    }
}

/// Intermediate values of a batch forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct Forward<T: Real> {
    x: Array2<T>,
    tanh: Array2<T>,
    normed: Array2<T>,
    rstd: Array1<T>,
    hidden: Array2<T>,
    hidden_mask: Option<Array2<T>>,
    pub logits: Array2<T>,
}

impl<T: Real> ProbeModel<T> {
    /// Uniform(±1/√fan_in) weights and biases, unit gain, zero bias, drawn in
    /// the order W1, b1, W2, b2.
    pub fn init<R: Rng>(
        rng: &mut R,
        input_dim: usize,
        hidden: usize,
        classes: Vec<UnifiedLabel>,
        input: ProbeInput,
        input_dropout: f64,
        hidden_dropout: f64,
    ) -> Self {
        let c = classes.len();
        let mut uniform = |n: usize, fan_in: usize| -> Vec<T> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n)
                .map(|_| T::from_f64_lossy(rng.random_range(-bound..bound)))
                .collect()
        };
        let w1 = Array2::from_shape_vec((hidden, input_dim), uniform(hidden * input_dim, input_dim)).unwrap();
        let b1 = Array1::from(uniform(hidden, input_dim));
        let w2 = Array2::from_shape_vec((c, hidden), uniform(c * hidden, hidden)).unwrap();
        let b2 = Array1::from(uniform(c, hidden));
        ProbeModel {
            w1,
            b1,
            ln_gain: Array1::ones(hidden),
            ln_bias: Array1::zeros(hidden),
            w2,
            b2,
            input_dropout,
            hidden_dropout,
            classes,
            input,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.param_blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn param_blocks(&self) -> [&[T]; 6] {
        [
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.ln_gain.as_slice().unwrap(),
            self.ln_bias.as_slice().unwrap(),
            self.w2.as_slice().unwrap(),
            self.b2.as_slice().unwrap(),
        ]
    }

    pub fn param_blocks_mut(&mut self) -> [&mut [T]; 6] {
        [
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.ln_gain.as_slice_mut().unwrap(),
            self.ln_bias.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
        ]
    }

    fn check_dim(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::Shape(format!(
                "probe expects {} input features, got {cols}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Batch forward pass. `masks = None` is evaluation mode (no dropout).
    pub fn forward_batch(&self, x: ArrayView2<T>, masks: Option<&DropoutMasks<T>>) -> Result<Forward<T>> {
        self.check_dim(x.ncols())?;
        let x = match masks {
            Some(m) => &x * &m.input,
            None => x.to_owned(),
        };
        let mut pre = x.dot(&self.w1.t());
        pre = pre + &self.b1;
        let tanh = pre.mapv(tanh);

        let d = T::from_usize(self.hidden_dim()).unwrap();
        let eps = T::from_f64_lossy(LAYER_NORM_EPS);
        let mean = tanh.sum_axis(Axis(1)) / d;
        let centered = &tanh - &mean.view().insert_axis(Axis(1));
        let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
        let rstd = var.mapv(|v| T::one() / (v + eps).sqrt());
        let normed = &centered * &rstd.view().insert_axis(Axis(1));
        let mut hidden = &normed * &self.ln_gain + &self.ln_bias;
        if let Some(m) = masks {
            hidden = hidden * &m.hidden;
        }
        let mut logits = hidden.dot(&self.w2.t());
        logits = logits + &self.b2;
        Ok(Forward {
            x,
            tanh,
            normed,
            rstd,
            hidden,
            hidden_mask: masks.map(|m| m.hidden.clone()),
            logits,
        })
    }

    /// Logistic class scores for one input vector.
    pub fn forward(&self, a: ArrayView1<T>, masks: Option<&DropoutMasks<T>>) -> Result<Array1<T>> {
        let x = a.insert_axis(Axis(0));
        let f = self.forward_batch(x, masks)?;
        Ok(f.logits.row(0).mapv(logistic))
    }

    /// Gradients of the batch loss given `d_logits` (batch × classes).
    pub fn backward(&self, f: &Forward<T>, d_logits: ArrayView2<T>) -> Grads<T> {
        let w2 = d_logits.t().dot(&f.hidden);
        let b2 = d_logits.sum_axis(Axis(0));
        let mut d_hidden = d_logits.dot(&self.w2);
        if let Some(mask) = &f.hidden_mask {
            d_hidden = d_hidden * mask;
        }
        let ln_gain = (&d_hidden * &f.normed).sum_axis(Axis(0));
        let ln_bias = d_hidden.sum_axis(Axis(0));
        let d_normed = &d_hidden * &self.ln_gain;

        let d = T::from_usize(self.hidden_dim()).unwrap();
        let mean_dn = d_normed.sum_axis(Axis(1)) / d;
        let mean_dn_n = (&d_normed * &f.normed).sum_axis(Axis(1)) / d;
        let mut d_tanh = d_normed - &mean_dn.view().insert_axis(Axis(1));
        d_tanh = d_tanh - &(&f.normed * &mean_dn_n.view().insert_axis(Axis(1)));
        d_tanh = d_tanh * &f.rstd.view().insert_axis(Axis(1));
        let d_pre = d_tanh * &f.tanh.mapv(|t| T::one() - t * t);

        let w1 = d_pre.t().dot(&f.x);
        let b1 = d_pre.sum_axis(Axis(0));
        Grads {
            w1,
            b1,
            ln_gain,
            ln_bias,
            w2,
            b2,
        }
    }

    /// Index into `classes` of the highest logit for each row.
    pub fn predict_indices(&self, x: ArrayView2<T>) -> Result<Vec<usize>> {
        let f = self.forward_batch(x, None)?;
        Ok(f.logits.rows().into_iter().map(|r| argmax(r)).collect())
    }

    /// Copy restricted to the given layer-wise input columns; used for tests
    /// of representation slicing.
    pub fn w1_columns(&self, cols: std::ops::Range<usize>) -> Array2<T> {
        self.w1.slice(s![.., cols]).to_owned()
    }
}

/// `tanh(x) = 1 − 2/(e^{2x} + 1)`; several times faster than the libm call
/// and saturates correctly at both ends.
pub fn tanh<T: Real>(x: T) -> T {
    let two = T::one() + T::one();
    T::one() - two / ((two * x).exp() + T::one())
}

pub fn logistic<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

/// First index of the maximum (NaN never wins).
pub fn argmax<T: Real>(v: ArrayView1<T>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Per-class weights `k/√n_c` with `k` chosen so the mean weight is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(pub Vec<f64>);

impl ClassWeights {
    pub fn uniform(n: usize) -> Self {
        ClassWeights(vec![1.0; n])
    }
}

pub fn class_weights(counts: &[usize]) -> Result<ClassWeights> {
    if counts.is_empty() {
        return Err(Error::Training("no classes".into()));
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::Training(
            "class with zero training instances in the partition".into(),
        ));
    }
    let raw: Vec<f64> = counts.iter().map(|&n| 1.0 / (n as f64).sqrt()).collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    Ok(ClassWeights(raw.into_iter().map(|w| w / mean).collect()))
}

/// Weighted softmax cross-entropy of one logit vector against class
/// `target`: `-w_y · log softmax(z)_y`, with gradient `w_y (softmax(z) - e_y)`.
pub fn loss<T: Real>(logits: ArrayView1<T>, target: usize, weights: &ClassWeights) -> Result<(T, Array1<T>)> {
    let c = logits.len();
    if target >= c || weights.0.len() != c {
        return Err(Error::Shape(format!(
            "target {target} / {} weights do not fit {c} logits",
            weights.0.len()
        )));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exp = logits.mapv(|z| (z - max).exp());
    let sum = exp.sum();
    let log_sum = sum.ln() + max;
    let w = T::from_f64_lossy(weights.0[target]);
    let value = w * (log_sum - logits[target]);
    let mut grad = exp / sum;
    grad[target] = grad[target] - T::one();
    Ok((value, grad * w))
}

/// Loss against a one-hot target vector; anything that is not exactly one-hot
/// is rejected.
pub fn loss_one_hot<T: Real>(
    logits: ArrayView1<T>,
    one_hot: ArrayView1<T>,
    weights: &ClassWeights,
) -> Result<(T, Array1<T>)> {
    let ones: Vec<usize> = one_hot
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == T::one())
        .map(|(i, _)| i)
        .collect();
    let zeros = one_hot.iter().filter(|&&v| v == T::zero()).count();
    if ones.len() != 1 || zeros + 1 != one_hot.len() || one_hot.len() != logits.len() {
        return Err(Error::Shape("target is not a one-hot vector".into()));
    }
    loss(logits, ones[0], weights)
}

/// Mean weighted loss of a batch and its gradient w.r.t. the logits.
pub fn batch_loss<T: Real>(
    logits: ArrayView2<T>,
    targets: &[usize],
    weights: &ClassWeights,
) -> Result<(T, Array2<T>)> {
    let b = T::from_usize(targets.len()).unwrap();
    let mut total = T::zero();
    let mut grad = Array2::zeros(logits.raw_dim());
    for (i, &t) in targets.iter().enumerate() {
        let (l, g) = loss(logits.row(i), t, weights)?;
        total = total + l;
        grad.row_mut(i).assign(&(g / b));
    }
    Ok((total / b, grad))
}
