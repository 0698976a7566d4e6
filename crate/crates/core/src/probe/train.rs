use std::collections::BTreeMap;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{batch_loss, class_weights, DropoutMasks, Grads, ProbeInput, ProbeModel, Real};
use crate::error::{Error, Result};
use crate::labels::UnifiedLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub hidden: usize,
    pub input_dropout: f64,
    pub hidden_dropout: f64,
    pub epochs: usize,
    /// Lower bound on optimizer steps; raises the epoch count on small data.
    pub min_update_steps: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::all_layers()
    }
}

impl TrainConfig {
    pub fn all_layers() -> Self {
        TrainConfig {
            batch_size: 64,
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            hidden: 512,
            input_dropout: 0.2,
            hidden_dropout: 0.2,
            epochs: 60,
            min_update_steps: 10_000,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn layerwise() -> Self {
        TrainConfig {
            epochs: 20,
            min_update_steps: 0,
            ..Self::all_layers()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Training(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.hidden == 0 {
            return bad("hidden size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight decay must be non-negative");
        }
        for p in [self.input_dropout, self.hidden_dropout] {
            if !(0.0..1.0).contains(&p) {
                return bad("dropout must be in [0, 1)");
            }
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }

    /// `max(epochs, ceil(min_update_steps / steps_per_epoch))`.
    pub fn epoch_budget(&self, n: usize) -> usize {
        let spe = self.steps_per_epoch(n).max(1);
        self.epochs.max(self.min_update_steps.div_ceil(spe))
    }
}

/// AdamW with decoupled weight decay: `p ← p − lr·wd·p` followed by the
/// bias-corrected Adam step.
#[derive(Debug, Clone)]
pub struct AdamW<T: Real> {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Grads<T>,
    v: Grads<T>,
}

impl<T: Real> AdamW<T> {
    pub fn new(model: &ProbeModel<T>, lr: f64, weight_decay: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamW {
            lr,
            weight_decay,
            beta1,
            beta2,
            eps,
            t: 0,
            m: Grads::zeros_like(model),
            v: Grads::zeros_like(model),
        }
    }

    pub fn from_config(model: &ProbeModel<T>, cfg: &TrainConfig) -> Self {
        Self::new(model, cfg.learning_rate, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps)
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, model: &mut ProbeModel<T>, grads: &Grads<T>) {
        self.t += 1;
        let f = T::from_f64_lossy;
        let decay = f(1.0 - self.lr * self.weight_decay);
        let (b1, b2) = (f(self.beta1), f(self.beta2));
        let (c1, c2) = (f(1.0 - self.beta1), f(1.0 - self.beta2));
        let bc1 = f(1.0 - self.beta1.powi(self.t));
        let bc2 = f(1.0 - self.beta2.powi(self.t));
        let lr = f(self.lr);
        let eps = f(self.eps);

        let params = model.param_blocks_mut();
        let gs = grads.blocks();
        let ms = blocks_mut(&mut self.m);
        let vs = blocks_mut(&mut self.v);
        for (((p, g), m), v) in params.into_iter().zip(gs).zip(ms).zip(vs) {
            for i in 0..p.len() {
                p[i] = p[i] * decay;
                m[i] = b1 * m[i] + c1 * g[i];
                v[i] = b2 * v[i] + c2 * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] = p[i] - lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

fn blocks_mut<T: Real>(g: &mut Grads<T>) -> [&mut [T]; 6] {
    [
        g.w1.as_slice_mut().unwrap(),
        g.b1.as_slice_mut().unwrap(),
        g.ln_gain.as_slice_mut().unwrap(),
        g.ln_bias.as_slice_mut().unwrap(),
        g.w2.as_slice_mut().unwrap(),
        g.b2.as_slice_mut().unwrap(),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub dev_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub config: TrainConfig,
    pub classes: Vec<UnifiedLabel>,
    pub class_counts: Vec<usize>,
    pub class_weights: Vec<f64>,
    pub train_size: usize,
    pub steps_per_epoch: usize,
    pub epochs_run: usize,
    pub total_steps: usize,
    pub epochs: Vec<EpochLog>,
}

/// Trains a probe on rows of `x` labelled `y`. The class set is the sorted
/// set of labels present in `y`; at least two are required.
pub fn train(
    x: ArrayView2<f32>,
    y: &[UnifiedLabel],
    input: ProbeInput,
    cfg: &TrainConfig,
    dev: Option<(ArrayView2<f32>, &[UnifiedLabel])>,
) -> Result<(ProbeModel<f32>, TrainingLog)> {
    cfg.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if x.nrows() == 0 {
        return Err(Error::Training("empty training set".into()));
    }
    let mut classes: Vec<UnifiedLabel> = y.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Training(format!(
            "training set has {} class(es); at least 2 are required",
            classes.len()
        )));
    }
    let targets: Vec<usize> = y
        .iter()
        .map(|l| classes.binary_search(l).unwrap())
        .collect();
    let mut counts = vec![0usize; classes.len()];
    for &t in &targets {
        counts[t] += 1;
    }
    let weights = class_weights(&counts)?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(2);

    let mut model = ProbeModel::<f32>::init(
        &mut init_rng,
        x.ncols(),
        cfg.hidden,
        classes.clone(),
        input,
        cfg.input_dropout,
        cfg.hidden_dropout,
    );
    let mut opt = AdamW::from_config(&model, cfg);

    let n = x.nrows();
    let steps_per_epoch = cfg.steps_per_epoch(n);
    let epochs = cfg.epoch_budget(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = Vec::with_capacity(epochs);

    for epoch in 0..epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), batch);
            let tb: Vec<usize> = batch.iter().map(|&i| targets[i]).collect();
            let masks = DropoutMasks::sample(
                &mut dropout_rng,
                batch.len(),
                model.input_dim(),
                model.hidden_dim(),
                cfg.input_dropout,
                cfg.hidden_dropout,
            );
            let f = model.forward_batch(xb.view(), Some(&masks))?;
            let (l, d_logits) = batch_loss(f.logits.view(), &tb, &weights)?;
            total += l as f64 * batch.len() as f64;
            let grads = model.backward(&f, d_logits.view());
            opt.step(&mut model, &grads);
        }
        let loss = total / n as f64;
        if !loss.is_finite() || !model.is_finite() {
            return Err(Error::Training(format!("non-finite loss or parameters at epoch {epoch}")));
        }
        let dev_accuracy = match dev {
            Some((dx, dy)) if !dy.is_empty() => {
                let pred = predict(&model, dx)?;
                Some(accuracy(&pred, dy))
            }
            _ => None,
        };
        log::debug!("epoch {epoch}: loss {loss:.5} dev {dev_accuracy:?}");
        log.push(EpochLog {
            epoch,
            loss,
            dev_accuracy,
        });
    }

    let log = TrainingLog {
        config: cfg.clone(),
        classes,
        class_counts: counts,
        class_weights: weights.0,
        train_size: n,
        steps_per_epoch,
        epochs_run: epochs,
        total_steps: opt.steps() as usize,
        epochs: log,
    };
    Ok((model, log))
}

pub(crate) fn accuracy(pred: &[UnifiedLabel], gold: &[UnifiedLabel]) -> f64 {
    let correct = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    correct as f64 / gold.len().max(1) as f64
}

/// Predicted labels for each row of `x`.
pub fn predict(model: &ProbeModel<f32>, x: ArrayView2<f32>) -> Result<Vec<UnifiedLabel>> {
    let mut out = Vec::with_capacity(x.nrows());
    for chunk in x.axis_chunks_iter(Axis(0), 4096) {
        out.extend(
            model
                .predict_indices(chunk)?
                .into_iter()
                .map(|i| model.classes[i]),
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetScore {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub total: usize,
    pub per_dataset: BTreeMap<String, DatasetScore>,
    /// Unweighted mean of the per-dataset accuracies.
    pub mean_dataset_accuracy: f64,
    pub predictions: Vec<UnifiedLabel>,
}

/// Gold labels outside the probe's class set always count as errors.
pub fn evaluate(
    model: &ProbeModel<f32>,
    x: ArrayView2<f32>,
    gold: &[UnifiedLabel],
    datasets: &[String],
) -> Result<Evaluation> {
    if gold.is_empty() {
        return Err(Error::Experiment("empty evaluation set".into()));
    }
    if x.nrows() != gold.len() || datasets.len() != gold.len() {
        return Err(Error::Shape(format!(
            "{} rows, {} labels, {} dataset ids",
            x.nrows(),
            gold.len(),
            datasets.len()
        )));
    }
    let predictions = predict(model, x)?;
    let mut per: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for ((p, g), d) in predictions.iter().zip(gold).zip(datasets) {
        let e = per.entry(d.clone()).or_default();
        e.1 += 1;
        if p == g {
            e.0 += 1;
        }
    }
    let per_dataset: BTreeMap<String, DatasetScore> = per
        .into_iter()
        .map(|(d, (c, t))| {
            (
                d,
                DatasetScore {
                    correct: c,
                    total: t,
                    accuracy: c as f64 / t as f64,
                },
            )
        })
        .collect();
    let mean_dataset_accuracy =
        per_dataset.values().map(|s| s.accuracy).sum::<f64>() / per_dataset.len() as f64;
    Ok(Evaluation {
        accuracy: accuracy(&predictions, gold),
        total: gold.len(),
        per_dataset,
        mean_dataset_accuracy,
        predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repr::PoolingConfig;
    use ndarray::Array2;

    fn input(dim: usize) -> ProbeInput {
        ProbeInput {
            layers: 1,
            heads: dim,
            pooling: PoolingConfig::default(),
            layer: None,
        }
    }

    #[test]
    fn epoch_budget_rule() {
        let cfg = TrainConfig::all_layers();
        // 3200 examples at batch 64 is 50 steps per epoch.
        assert_eq!(cfg.steps_per_epoch(3200), 50);
        assert_eq!(cfg.epoch_budget(3200), 200);
        assert_eq!(cfg.epoch_budget(64 * 1000), 60);
        assert_eq!(TrainConfig::layerwise().epoch_budget(3200), 20);
    }

    #[test]
    fn decay_only_contracts_geometrically() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = ProbeModel::<f64>::init(&mut rng, 4, 3, vec![UnifiedLabel::Causal, UnifiedLabel::Mode], input(4), 0.0, 0.0);
        let start = m.clone();
        let mut opt = AdamW::new(&m, 0.1, 0.5, 0.9, 0.999, 1e-8);
        let zero = Grads::zeros_like(&m);
        for _ in 0..3 {
            opt.step(&mut m, &zero);
        }
        let factor = (1.0f64 - 0.05).powi(3);
        for (a, b) in m.param_blocks().iter().zip(start.param_blocks()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y * factor).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_single_class() {
        let x = Array2::<f32>::zeros((4, 3));
        let y = vec![UnifiedLabel::Causal; 4];
        let err = train(x.view(), &y, input(3), &TrainConfig::layerwise(), None).unwrap_err();
        assert!(err.to_string().contains("at least 2"));
    }

    #[test]
    fn evaluate_counts_unseen_gold_as_wrong() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = ProbeModel::<f32>::init(&mut rng, 2, 4, vec![UnifiedLabel::Causal, UnifiedLabel::Mode], input(2), 0.0, 0.0);
        let x = Array2::<f32>::zeros((2, 2));
        let gold = vec![UnifiedLabel::Temporal, UnifiedLabel::Temporal];
        let ds = vec!["eng.rst.a".to_string(), "deu.rst.b".to_string()];
        let e = evaluate(&m, x.view(), &gold, &ds).unwrap();
        assert_eq!(e.accuracy, 0.0);
        assert_eq!(e.per_dataset.len(), 2);
        assert!(evaluate(&m, x.slice(ndarray::s![..0, ..]), &[], &[]).is_err());
    }
}
