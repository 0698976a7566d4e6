//! A small deterministic decoder-only transformer used as an attention source.
//!
//! Weights are drawn from normal(0, 0.02) using a ChaCha20 stream
//! (`rand_chacha::ChaCha20Rng::seed_from_u64(seed)`) and the Box-Muller
//! transform on 53-bit uniforms, in this order: token embedding (V×d),
//! position embedding (P×d), then per layer W_q, W_k, W_v, W_o (d×d),
//! W_in (d×4d), W_out (4d×d). Norm gains start at 1.
//!
//! Blocks are pre-norm (RMS norm, ε = 1e-5): causal multi-head attention
//! with a residual connection, then a ReLU feed-forward layer with a residual
//! connection. Matrix products and softmax sums run left to right; softmax
//! subtracts the row maximum and normalizes with an f64 accumulator.
//! Only the attention probabilities are returned.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::disrpt::Document;
use crate::error::{Error, Result};
use crate::repr::{AttentionSource, AttentionTensor, WindowAttention};

pub const INIT_STD: f64 = 0.02;
pub const NORM_EPS: f32 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub vocab: usize,
    pub max_positions: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            layers: 2,
            heads: 2,
            dim: 16,
            vocab: 256,
            max_positions: 8192,
            seed: 0,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.heads == 0 || self.dim == 0 || self.vocab == 0 || self.max_positions == 0 {
            return Err(Error::Model(format!("toy model dims must be positive: {self:?}")));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::Model(format!(
                "model dim {} is not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn ffn_dim(&self) -> usize {
        4 * self.dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub attn_norm: Vec<f32>,
    pub wq: Vec<f32>,
    pub wk: Vec<f32>,
    pub wv: Vec<f32>,
    pub wo: Vec<f32>,
    pub ffn_norm: Vec<f32>,
    pub w_in: Vec<f32>,
    pub w_out: Vec<f32>,
}

/// All matrices are row-major with shape (inputs, outputs).
#[derive(Debug, Clone, PartialEq)]
pub struct ToyWeights {
    pub token_embedding: Vec<f32>,
    pub position_embedding: Vec<f32>,
    pub layers: Vec<LayerWeights>,
}

impl ToyWeights {
    pub fn tensors(&self) -> impl Iterator<Item = &[f32]> {
        [self.token_embedding.as_slice(), self.position_embedding.as_slice()]
            .into_iter()
            .chain(self.layers.iter().flat_map(|l| {
                [
                    l.attn_norm.as_slice(),
                    l.wq.as_slice(),
                    l.wk.as_slice(),
                    l.wv.as_slice(),
                    l.wo.as_slice(),
                    l.ffn_norm.as_slice(),
                    l.w_in.as_slice(),
                    l.w_out.as_slice(),
                ]
            }))
    }

    /// FNV-1a over the little-endian bytes of every tensor, in declaration order.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in self.tensors() {
            for v in t {
                for b in v.to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }
}

struct NormalStream {
    rng: ChaCha20Rng,
}

impl NormalStream {
    fn new(seed: u64) -> Self {
        NormalStream {
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    fn sample(&mut self) -> f64 {
        let u1: f64 = 1.0 - self.rng.random::<f64>();
        let u2: f64 = self.rng.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    fn tensor(&mut self, n: usize) -> Vec<f32> {
        (0..n).map(|_| (self.sample() * INIT_STD) as f32).collect()
    }
}

pub fn init_weights(cfg: &ToyConfig) -> Result<ToyWeights> {
    cfg.validate()?;
    let d = cfg.dim;
    let f = cfg.ffn_dim();
    let mut s = NormalStream::new(cfg.seed);
    let token_embedding = s.tensor(cfg.vocab * d);
    let position_embedding = s.tensor(cfg.max_positions * d);
    let layers = (0..cfg.layers)
        .map(|_| LayerWeights {
            attn_norm: vec![1.0; d],
            wq: s.tensor(d * d),
            wk: s.tensor(d * d),
            wv: s.tensor(d * d),
            wo: s.tensor(d * d),
            ffn_norm: vec![1.0; d],
            w_in: s.tensor(d * f),
            w_out: s.tensor(f * d),
        })
        .collect();
    Ok(ToyWeights {
        token_embedding,
        position_embedding,
        layers,
    })
}

/// UTF-8 bytes as token ids.
pub fn tokenize_bytes(text: &str) -> Vec<u32> {
    text.bytes().map(u32::from).collect()
}

/// `x` (n×inp) times `w` (inp×out), accumulating each output left to right.
fn matmul(x: &[f32], n: usize, inp: usize, w: &[f32], out: usize) -> Vec<f32> {
    let mut y = vec![0.0f32; n * out];
    for r in 0..n {
        let xr = &x[r * inp..(r + 1) * inp];
        let yr = &mut y[r * out..(r + 1) * out];
        for (i, &xv) in xr.iter().enumerate() {
            let wr = &w[i * out..(i + 1) * out];
            for (yv, &wv) in yr.iter_mut().zip(wr) {
                *yv += xv * wv;
            }
        }
    }
    y
}

fn rms_norm(x: &[f32], n: usize, d: usize, gain: &[f32]) -> Vec<f32> {
    let mut y = vec![0.0f32; n * d];
    for r in 0..n {
        let row = &x[r * d..(r + 1) * d];
        let ms = row.iter().map(|v| v * v).sum::<f32>() / d as f32;
        let inv = 1.0 / (ms + NORM_EPS).sqrt();
        for j in 0..d {
            y[r * d + j] = row[j] * inv * gain[j];
        }
    }
    y
}

#[derive(Debug, Clone)]
pub struct ToyModel {
    pub config: ToyConfig,
    pub weights: ToyWeights,
}

impl ToyModel {
    pub fn new(config: ToyConfig) -> Result<Self> {
        let weights = init_weights(&config)?;
        Ok(ToyModel { config, weights })
    }

    pub fn forward_attentions(&self, token_ids: &[u32]) -> Result<AttentionTensor> {
        forward_attentions(&self.config, &self.weights, token_ids)
    }
}

/// Runs the model on `token_ids` and returns the (L, H, N, N) attention
/// probabilities; the residual stream output is discarded.
pub fn forward_attentions(
    cfg: &ToyConfig,
    weights: &ToyWeights,
    token_ids: &[u32],
) -> Result<AttentionTensor> {
    cfg.validate()?;
    let n = token_ids.len();
    if n == 0 {
        return Err(Error::Model("empty input sequence".into()));
    }
    if n > cfg.max_positions {
        return Err(Error::Model(format!(
            "sequence of {n} tokens exceeds max positions {}",
            cfg.max_positions
        )));
    }
    if let Some(&bad) = token_ids.iter().find(|&&t| t as usize >= cfg.vocab) {
        return Err(Error::Model(format!(
            "token id {bad} out of vocabulary of size {}",
            cfg.vocab
        )));
    }
    let d = cfg.dim;
    let dh = cfg.head_dim();
    let f = cfg.ffn_dim();
    let scale = 1.0 / (dh as f32).sqrt();

    let mut x = vec![0.0f32; n * d];
    for (t, &id) in token_ids.iter().enumerate() {
        let tok = &weights.token_embedding[id as usize * d..(id as usize + 1) * d];
        let pos = &weights.position_embedding[t * d..(t + 1) * d];
        for j in 0..d {
            x[t * d + j] = tok[j] + pos[j];
        }
    }

    let mut attn = vec![0.0f32; cfg.layers * cfg.heads * n * n];
    let mut scores = vec![0.0f32; n];
    for (l, lw) in weights.layers.iter().enumerate() {
        let h = rms_norm(&x, n, d, &lw.attn_norm);
        let q = matmul(&h, n, d, &lw.wq, d);
        let k = matmul(&h, n, d, &lw.wk, d);
        let v = matmul(&h, n, d, &lw.wv, d);
        let mut ctx = vec![0.0f32; n * d];
        for head in 0..cfg.heads {
            let off = head * dh;
            for qi in 0..n {
                let qv = &q[qi * d + off..qi * d + off + dh];
                let mut max = f32::NEG_INFINITY;
                for ki in 0..=qi {
                    let kv = &k[ki * d + off..ki * d + off + dh];
                    let mut s = 0.0f32;
                    for j in 0..dh {
                        s += qv[j] * kv[j];
                    }
                    let s = s * scale;
                    scores[ki] = s;
                    if s > max {
                        max = s;
                    }
                }
                let mut sum = 0.0f64;
                for s in &mut scores[..=qi] {
                    *s = (*s - max).exp();
                    sum += *s as f64;
                }
                let row = &mut attn[((l * cfg.heads + head) * n + qi) * n..][..n];
                for ki in 0..=qi {
                    row[ki] = (scores[ki] as f64 / sum) as f32;
                }
                let out = &mut ctx[qi * d + off..qi * d + off + dh];
                for ki in 0..=qi {
                    let p = row[ki];
                    let vv = &v[ki * d + off..ki * d + off + dh];
                    for j in 0..dh {
                        out[j] += p * vv[j];
                    }
                }
            }
        }
        let o = matmul(&ctx, n, d, &lw.wo, d);
        for (xv, ov) in x.iter_mut().zip(&o) {
            *xv += ov;
        }
        let h2 = rms_norm(&x, n, d, &lw.ffn_norm);
        let mut hidden = matmul(&h2, n, d, &lw.w_in, f);
        for hv in &mut hidden {
            *hv = hv.max(0.0);
        }
        let o2 = matmul(&hidden, n, f, &lw.w_out, d);
        for (xv, ov) in x.iter_mut().zip(&o2) {
            *xv += ov;
        }
    }
    AttentionTensor::new(cfg.layers, cfg.heads, n, attn)
}

/// Joins window tokens with single spaces and returns the UTF-8 bytes plus the
/// byte range of each token.
pub fn align_tokens(tokens: &[String]) -> (String, Vec<Range<usize>>) {
    let mut text = String::new();
    let mut ranges = Vec::with_capacity(tokens.len());
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            text.push(' ');
        }
        let start = text.len();
        text.push_str(t);
        ranges.push(start..text.len());
    }
    (text, ranges)
}

/// Runs the toy model over each window's byte sequence.
#[derive(Debug, Clone)]
pub struct ToySource {
    model: ToyModel,
}

impl ToySource {
    pub fn new(config: ToyConfig) -> Result<Self> {
        Ok(ToySource {
            model: ToyModel::new(config)?,
        })
    }

    pub fn model(&self) -> &ToyModel {
        &self.model
    }
}

impl AttentionSource for ToySource {
    fn layers(&self) -> usize {
        self.model.config.layers
    }

    fn heads(&self) -> usize {
        self.model.config.heads
    }

    fn window_attention(&self, doc: &Document, window: Range<usize>) -> Result<WindowAttention> {
        let (text, positions) = align_tokens(&doc.tokens[window]);
        let tensor = self
            .model
            .forward_attentions(&tokenize_bytes(&text))
            .map_err(|e| Error::Model(format!("document {}: {e}", doc.doc_id)))?;
        Ok(WindowAttention { tensor, positions })
    }
}
