//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use discoprobe::disrpt::{parse_token_spans, DatasetId, Split};
use discoprobe::labels::UnifiedLabel;
use discoprobe::probe::ProbeModel;
use discoprobe::repr::{
    AttentionTensor, RecordMeta, ReprLayout, ReprRecord, ReprSource, ReprStore, Strategy, Subset,
};
use discoprobe::toy_lm::{ToyConfig, ToyWeights};
use discoprobe::TokenSpanSet;
use rand::Rng;

pub fn spans(s: &str) -> TokenSpanSet {
    parse_token_spans(s).unwrap()
}

/// Causal, row-stochastic random attention.
pub fn random_attention<R: Rng>(rng: &mut R, layers: usize, heads: usize, n: usize) -> AttentionTensor {
    let mut data = vec![0f32; layers * heads * n * n];
    for l in 0..layers {
        for h in 0..heads {
            for q in 0..n {
                let raw: Vec<f64> = (0..=q).map(|_| rng.random_range(0.01..1.0)).collect();
                let sum: f64 = raw.iter().sum();
                for (k, v) in raw.iter().enumerate() {
                    data[((l * heads + h) * n + q) * n + k] = (v / sum) as f32;
                }
            }
        }
    }
    AttentionTensor::new(layers, heads, n, data).unwrap()
}

/// Random disjoint span pair over `1..=n` with `first` wholly before `second`.
pub fn random_span_pair<R: Rng>(rng: &mut R, n: usize) -> (TokenSpanSet, TokenSpanSet) {
    let cut = rng.random_range(1..n);
    let pick = |rng: &mut R, lo: usize, hi: usize| -> TokenSpanSet {
        let mut idx: Vec<usize> = (lo..=hi).filter(|_| rng.random_bool(0.6)).collect();
        if idx.is_empty() {
            idx.push(rng.random_range(lo..=hi));
        }
        TokenSpanSet::from_ranges(idx.into_iter().map(|i| (i, i)).collect()).unwrap()
    };
    let a = pick(rng, 1, cut);
    let b = pick(rng, cut + 1, n);
    (a, b)
}

fn pool_set(x: &AttentionTensor, l: usize, h: usize, pairs: &[(usize, usize)], mean: bool) -> f32 {
    if mean {
        let mut s = 0f64;
        for &(q, k) in pairs {
            s += x.get(l, h, q, k) as f64;
        }
        (s / pairs.len() as f64) as f32
    } else {
        let mut m = f32::NEG_INFINITY;
        for &(q, k) in pairs {
            m = m.max(x.get(l, h, q, k));
        }
        m
    }
}

/// Straightforward pooling oracle: builds each block's (query, key) list by
/// brute force and emits values block → part → layer → head.
pub fn oracle_pool(x: &AttentionTensor, first: &TokenSpanSet, second: &TokenSpanSet, strategy: Strategy, subset: Subset) -> Vec<f32> {
    let i1: Vec<usize> = first.indices().map(|i| i - 1).collect();
    let i2: Vec<usize> = second.indices().map(|i| i - 1).collect();
    let within = |idx: &[usize]| -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for &q in idx {
            for &k in idx {
                if k <= q {
                    v.push((q, k));
                }
            }
        }
        v
    };
    let mut cross = Vec::new();
    for &q in &i2 {
        for &k in &i1 {
            cross.push((q, k));
        }
    }
    let blocks: Vec<Vec<(usize, usize)>> = match subset {
        Subset::All => vec![within(&i1), within(&i2), cross],
        Subset::Inter => vec![cross],
        Subset::Intra => vec![within(&i1), within(&i2)],
    };
    let parts: Vec<bool> = match strategy {
        Strategy::Max => vec![false],
        Strategy::Mean => vec![true],
        Strategy::MeanMax => vec![true, false],
    };
    let mut out = Vec::new();
    for b in &blocks {
        for &mean in &parts {
            for l in 0..x.layers() {
                for h in 0..x.heads() {
                    out.push(pool_set(x, l, h, b, mean));
                }
            }
        }
    }
    out
}

/// Straight-line f64 forward of the toy model returning attention
/// probabilities `[layer][head][query][key]`.
pub fn reference_toy_attention(cfg: &ToyConfig, w: &ToyWeights, ids: &[u32]) -> Vec<f64> {
    let n = ids.len();
    let d = cfg.dim;
    let heads = cfg.heads;
    let dh = d / heads;
    let f = 4 * d;
    let at = |m: &[f32], i: usize, j: usize, cols: usize| m[i * cols + j] as f64;

    let mut x = vec![vec![0f64; d]; n];
    for t in 0..n {
        for j in 0..d {
            x[t][j] = at(&w.token_embedding, ids[t] as usize, j, d) + at(&w.position_embedding, t, j, d);
        }
    }
    let norm = |x: &Vec<Vec<f64>>, gain: &[f32]| -> Vec<Vec<f64>> {
        x.iter()
            .map(|row| {
                let ms: f64 = row.iter().map(|v| v * v).sum::<f64>() / d as f64;
                let inv = 1.0 / (ms + 1e-5).sqrt();
                row.iter().zip(gain).map(|(v, g)| v * inv * *g as f64).collect()
            })
            .collect()
    };
    let mul = |x: &Vec<Vec<f64>>, m: &[f32], inp: usize, out: usize| -> Vec<Vec<f64>> {
        x.iter()
            .map(|row| {
                (0..out)
                    .map(|o| (0..inp).map(|i| row[i] * at(m, i, o, out)).sum())
                    .collect()
            })
            .collect()
    };

    let mut probs = vec![0f64; cfg.layers * heads * n * n];
    for (l, lw) in w.layers.iter().enumerate() {
        let h = norm(&x, &lw.attn_norm);
        let q = mul(&h, &lw.wq, d, d);
        let k = mul(&h, &lw.wk, d, d);
        let v = mul(&h, &lw.wv, d, d);
        let mut ctx = vec![vec![0f64; d]; n];
        for hd in 0..heads {
            for qi in 0..n {
                let scores: Vec<f64> = (0..=qi)
                    .map(|ki| {
                        (0..dh).map(|j| q[qi][hd * dh + j] * k[ki][hd * dh + j]).sum::<f64>()
                            / (dh as f64).sqrt()
                    })
                    .collect();
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let z: f64 = e.iter().sum();
                for ki in 0..=qi {
                    let p = e[ki] / z;
                    probs[((l * heads + hd) * n + qi) * n + ki] = p;
                    for j in 0..dh {
                        ctx[qi][hd * dh + j] += p * v[ki][hd * dh + j];
                    }
                }
            }
        }
        let o = mul(&ctx, &lw.wo, d, d);
        for t in 0..n {
            for j in 0..d {
                x[t][j] += o[t][j];
            }
        }
        let h2 = norm(&x, &lw.ffn_norm);
        let hidden: Vec<Vec<f64>> = mul(&h2, &lw.w_in, d, f)
            .into_iter()
            .map(|r| r.into_iter().map(|v| v.max(0.0)).collect())
            .collect();
        let o2 = mul(&hidden, &lw.w_out, f, d);
        for t in 0..n {
            for j in 0..d {
                x[t][j] += o2[t][j];
            }
        }
    }
    probs
}

/// `Σ_c Σ_{j in layer} |Σ_d W2[c,d] W1[d,j]|` by explicit loops, with the
/// layer of column `j` recomputed from the layout dimensions.
pub fn oracle_importance(model: &ProbeModel<f32>, layout: &ReprLayout) -> Vec<f64> {
    let (c, hidden, input) = (model.num_classes(), model.hidden_dim(), model.input_dim());
    let mut scores = vec![0f64; layout.layers];
    for ci in 0..c {
        for j in 0..input {
            let mut m = 0f64;
            for d in 0..hidden {
                m += model.w2[[ci, d]] as f64 * model.w1[[d, j]] as f64;
            }
            let layer = (j / layout.heads) % layout.layers;
            scores[layer] += m.abs();
        }
    }
    scores
}

/// Well-separated Gaussian-ish clusters: class `c` has mean 2 on
/// coordinates `j ≡ c (mod classes)`.
pub fn blobs<R: Rng>(rng: &mut R, n: usize, dim: usize, classes: &[UnifiedLabel]) -> (Vec<Vec<f32>>, Vec<UnifiedLabel>) {
    let k = classes.len();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        x.push(
            (0..dim)
                .map(|j| rng.random_range(-0.5f32..0.5) + if j % k == c { 2.0 } else { 0.0 })
                .collect(),
        );
        y.push(classes[c]);
    }
    (x, y)
}

/// Representation store whose vectors encode label and language directly;
/// `layers` × `heads` with max/all pooling.
pub struct StoreRow {
    pub dataset: &'static str,
    pub split: Split,
    pub label: UnifiedLabel,
    pub values: Vec<f32>,
}

pub fn make_store(layout: ReprLayout, rows: Vec<StoreRow>) -> ReprStore {
    let mut records = Vec::new();
    let mut meta = Vec::new();
    for (i, r) in rows.into_iter().enumerate() {
        assert_eq!(r.values.len(), layout.width());
        records.push(ReprRecord {
            ordinal: i as u64,
            source: ReprSource::Direct,
            values: r.values,
        });
        meta.push(RecordMeta {
            ordinal: i as u64,
            dataset: r.dataset.parse::<DatasetId>().unwrap(),
            doc_id: format!("d{i}"),
            split: r.split,
            unified_label: Some(r.label),
            original_label: r.label.to_string(),
        });
    }
    ReprStore { layout, records, meta }
}
