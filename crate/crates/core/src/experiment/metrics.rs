use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::UnifiedLabel;
use crate::probe::ProbeModel;
use crate::repr::ReprLayout;

/// Counts indexed `[gold][predicted]` over `labels`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<UnifiedLabel>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    /// Label axis is the probe's class set followed by any unseen gold labels.
    pub fn from_predictions(classes: &[UnifiedLabel], gold: &[UnifiedLabel], predicted: &[UnifiedLabel]) -> Self {
        let mut labels = classes.to_vec();
        let mut extra: Vec<UnifiedLabel> = gold
            .iter()
            .chain(predicted)
            .filter(|l| !classes.contains(l))
            .copied()
            .collect();
        extra.sort();
        extra.dedup();
        labels.extend(extra);
        let n = labels.len();
        let mut counts = vec![vec![0u64; n]; n];
        let idx = |l: &UnifiedLabel| labels.iter().position(|x| x == l).unwrap();
        for (g, p) in gold.iter().zip(predicted) {
            counts[idx(g)][idx(p)] += 1;
        }
        ConfusionMatrix { labels, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Each row divided by its sum; empty rows stay zero.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|r| {
                let s: u64 = r.iter().sum();
                r.iter()
                    .map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 })
                    .collect()
            })
            .collect()
    }

    /// Elementwise sum; label axes must match.
    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.labels != other.labels {
            return Err(Error::Experiment("confusion matrices have different label sets".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

/// Per-layer score `Σ_c Σ_{j ∈ layer} |(W2·W1)[c, j]|` for an all-layer probe.
pub fn layer_importance(model: &ProbeModel<f32>, layout: &ReprLayout) -> Result<Vec<f64>> {
    if model.input.layer.is_some() {
        return Err(Error::Experiment(
            "layer importance needs an all-layer probe, got a layer-wise one".into(),
        ));
    }
    if model.input_dim() != layout.width() {
        return Err(Error::Shape(format!(
            "probe input has {} features, layout has {}",
            model.input_dim(),
            layout.width()
        )));
    }
    let w1 = model.w1.mapv(f64::from);
    let w2 = model.w2.mapv(f64::from);
    let m = w2.dot(&w1);
    let mut scores = vec![0.0; layout.layers];
    for row in m.rows() {
        for (j, v) in row.iter().enumerate() {
            scores[layout.layer_of(j)] += v.abs();
        }
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use UnifiedLabel::*;

    #[test]
    fn perfect_predictions_are_diagonal() {
        let gold = [Causal, Mode, Mode, Temporal];
        let m = ConfusionMatrix::from_predictions(&[Temporal, Mode, Causal], &gold, &gold);
        assert_eq!(m.trace(), 4);
        assert_eq!(m.total(), 4);
        assert_eq!(m.row_sums(), vec![1, 2, 1]);
    }

    #[test]
    fn unseen_gold_gets_extra_row() {
        let m = ConfusionMatrix::from_predictions(&[Mode, Causal], &[Framing, Mode], &[Mode, Mode]);
        assert_eq!(m.labels, vec![Mode, Causal, Framing]);
        assert_eq!(m.counts[2][0], 1);
        let norm = m.row_normalized();
        assert_eq!(norm[1], vec![0.0, 0.0, 0.0]);
        assert_eq!(norm[0][0], 1.0);
    }
}
