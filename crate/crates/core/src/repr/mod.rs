//! Fixed-length attention representations of relation argument pairs.
//!
//! For every layer and head, attention scores are pooled within the first unit
//! (`D1`), within the second unit (`D2`) and from the second unit's queries to
//! the first unit's keys (`C`, the only populated cross block under a causal
//! mask). The flattened vector `a` concatenates the selected blocks.
//!
//! Layout of `a`: block-major in the order (D1, D2, C), restricted to the
//! blocks of the configured [`Subset`]; inside a block, one part per pooling
//! function (mean first, then max, for `mean+max`); inside a part, layer-major
//! and head-minor. With `max`/`all` this gives
//! `a[b·L·H + l·H + h]` for block `b ∈ {D1, D2, C}`.

mod atsr;
mod encode;
mod pooling;
mod store;
mod window;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use atsr::{read_atsr, write_atsr, AtsrDirSource};
pub use encode::{
    capture_counts, capturing_window, encode_document, encode_relations, AttentionSource, DocumentEncoding, EncodeStats,
    FixedSource, WindowAttention,
};
pub use pooling::{layer_slice, layer_slice_values, pool_spans};
pub use store::{
    metadata_path, read_aprd_from, read_repr_store, write_aprd_to, write_repr_store, RecordMeta, ReprRecord, ReprStore,
};
pub use window::{make_windows, WindowPolicy};

/// Dense causal attention scores with shape (layers, heads, tokens, tokens),
/// stored row-major as `[layer][head][query][key]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTensor {
    layers: usize,
    heads: usize,
    tokens: usize,
    data: Vec<f32>,
}

impl AttentionTensor {
    pub fn new(layers: usize, heads: usize, tokens: usize, data: Vec<f32>) -> Result<Self> {
        if layers == 0 || heads == 0 || tokens == 0 {
            return Err(Error::Shape(format!(
                "attention dims must be positive, got L={layers} H={heads} N={tokens}"
            )));
        }
        let want = layers * heads * tokens * tokens;
        if data.len() != want {
            return Err(Error::Shape(format!(
                "attention data has {} values, expected L·H·N·N = {want}",
                data.len()
            )));
        }
        Ok(AttentionTensor {
            layers,
            heads,
            tokens,
            data,
        })
    }

    pub fn zeros(layers: usize, heads: usize, tokens: usize) -> Result<Self> {
        Self::new(layers, heads, tokens, vec![0.0; layers * heads * tokens * tokens])
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    fn offset(&self, layer: usize, head: usize, query: usize, key: usize) -> usize {
        ((layer * self.heads + head) * self.tokens + query) * self.tokens + key
    }

    #[inline]
    pub fn get(&self, layer: usize, head: usize, query: usize, key: usize) -> f32 {
        self.data[self.offset(layer, head, query, key)]
    }

    pub fn set(&mut self, layer: usize, head: usize, query: usize, key: usize, v: f32) {
        let i = self.offset(layer, head, query, key);
        self.data[i] = v;
    }

    /// The `query` row of one head, all `tokens` keys.
    pub fn row(&self, layer: usize, head: usize, query: usize) -> &[f32] {
        let start = self.offset(layer, head, query, 0);
        &self.data[start..start + self.tokens]
    }

    /// Checks the causal-attention invariants: zeros above the diagonal,
    /// entries in [0, 1], rows summing to 1 within `tol`.
    pub fn validate(&self, tol: f32) -> Result<()> {
        for l in 0..self.layers {
            for h in 0..self.heads {
                for q in 0..self.tokens {
                    let row = self.row(l, h, q);
                    if let Some(k) = row[q + 1..].iter().position(|&v| v != 0.0) {
                        return Err(Error::Shape(format!(
                            "non-zero score above diagonal at layer {l} head {h} query {q} key {}",
                            q + 1 + k
                        )));
                    }
                    if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                        return Err(Error::Shape(format!(
                            "score outside [0,1] at layer {l} head {h} query {q}"
                        )));
                    }
                    let sum: f64 = row[..=q].iter().map(|&v| v as f64).sum();
                    if (sum - 1.0).abs() > tol as f64 {
                        return Err(Error::Shape(format!(
                            "row sum {sum} at layer {l} head {h} query {q}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Strategy {
    #[default]
    #[serde(rename = "max")]
    Max,
    #[serde(rename = "mean")]
    Mean,
    #[serde(rename = "mean+max")]
    MeanMax,
}

impl Strategy {
    pub fn code(self) -> u8 {
        match self {
            Strategy::Max => 0,
            Strategy::Mean => 1,
            Strategy::MeanMax => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        [Strategy::Max, Strategy::Mean, Strategy::MeanMax]
            .into_iter()
            .find(|s| s.code() == c)
    }

    pub fn parts(self) -> &'static [Pool] {
        match self {
            Strategy::Max => &[Pool::Max],
            Strategy::Mean => &[Pool::Mean],
            Strategy::MeanMax => &[Pool::Mean, Pool::Max],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Max => "max",
            Strategy::Mean => "mean",
            Strategy::MeanMax => "mean+max",
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "max" => Ok(Strategy::Max),
            "mean" => Ok(Strategy::Mean),
            "mean+max" => Ok(Strategy::MeanMax),
            _ => Err(format!("invalid pooling {s:?} (max|mean|mean+max)")),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    #[default]
    All,
    Inter,
    Intra,
}

impl Subset {
    pub fn code(self) -> u8 {
        match self {
            Subset::All => 0,
            Subset::Inter => 1,
            Subset::Intra => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        [Subset::All, Subset::Inter, Subset::Intra]
            .into_iter()
            .find(|s| s.code() == c)
    }

    pub fn blocks(self) -> &'static [Block] {
        match self {
            Subset::All => &[Block::D1, Block::D2, Block::C],
            Subset::Inter => &[Block::C],
            Subset::Intra => &[Block::D1, Block::D2],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::Inter => "inter",
            Subset::Intra => "intra",
        }
    }
}

impl FromStr for Subset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "all" => Ok(Subset::All),
            "inter" => Ok(Subset::Inter),
            "intra" => Ok(Subset::Intra),
            _ => Err(format!("invalid subset {s:?} (all|inter|intra)")),
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    D1,
    D2,
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pool {
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PoolingConfig {
    pub strategy: Strategy,
    pub subset: Subset,
}

/// Shape of a representation vector: model dims plus pooling configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReprLayout {
    pub layers: usize,
    pub heads: usize,
    pub pooling: PoolingConfig,
}

impl ReprLayout {
    pub fn new(layers: usize, heads: usize, pooling: PoolingConfig) -> Self {
        ReprLayout {
            layers,
            heads,
            pooling,
        }
    }

    /// Entries per (block, pooling part): `L·H`.
    pub fn part_width(&self) -> usize {
        self.layers * self.heads
    }

    pub fn width(&self) -> usize {
        self.pooling.subset.blocks().len() * self.pooling.strategy.parts().len() * self.part_width()
    }

    /// Width of one layer's slice.
    pub fn layer_width(&self) -> usize {
        self.width() / self.layers
    }

    pub fn offset(&self, block_pos: usize, part_pos: usize, layer: usize, head: usize) -> usize {
        let parts = self.pooling.strategy.parts().len();
        ((block_pos * parts + part_pos) * self.layers + layer) * self.heads + head
    }

    /// Layer that coordinate `j` of `a` belongs to.
    pub fn layer_of(&self, j: usize) -> usize {
        (j / self.heads) % self.layers
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReprSource {
    Direct,
    FallbackMean,
}

impl ReprSource {
    pub fn code(self) -> u8 {
        match self {
            ReprSource::Direct => 0,
            ReprSource::FallbackMean => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(ReprSource::Direct),
            1 => Some(ReprSource::FallbackMean),
            _ => None,
        }
    }
}

/// A pooled relation representation: the flattened vector `a` plus its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanRepresentation {
    pub layout: ReprLayout,
    pub values: Vec<f32>,
    pub source: ReprSource,
}

impl SpanRepresentation {
    /// Pooled value for one (block, pool, layer, head), if the layout holds it.
    pub fn get(&self, block: Block, pool: Pool, layer: usize, head: usize) -> Option<f32> {
        let b = self
            .layout
            .pooling
            .subset
            .blocks()
            .iter()
            .position(|&x| x == block)?;
        let p = self
            .layout
            .pooling
            .strategy
            .parts()
            .iter()
            .position(|&x| x == pool)?;
        Some(self.values[self.layout.offset(b, p, layer, head)])
    }

    /// The (L, H) matrix of one block and pooling part, layer-major.
    pub fn block(&self, block: Block, pool: Pool) -> Option<Vec<f32>> {
        let l = self.layout;
        let mut out = Vec::with_capacity(l.part_width());
        for layer in 0..l.layers {
            for head in 0..l.heads {
                out.push(self.get(block, pool, layer, head)?);
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths_follow_formula() {
        for layers in 1..=5 {
            for heads in 1..=5 {
                let lh = layers * heads;
                let w = |strategy, subset| {
                    ReprLayout::new(layers, heads, PoolingConfig { strategy, subset }).width()
                };
                assert_eq!(w(Strategy::Max, Subset::All), 3 * lh);
                assert_eq!(w(Strategy::Mean, Subset::All), 3 * lh);
                assert_eq!(w(Strategy::MeanMax, Subset::All), 6 * lh);
                assert_eq!(w(Strategy::Max, Subset::Inter), lh);
                assert_eq!(w(Strategy::Max, Subset::Intra), 2 * lh);
                assert_eq!(w(Strategy::MeanMax, Subset::Inter), 2 * lh);
            }
        }
    }

    #[test]
    fn layer_of_matches_offset() {
        let layout = ReprLayout::new(3, 2, PoolingConfig {
            strategy: Strategy::MeanMax,
            subset: Subset::All,
        });
        for b in 0..3 {
            for p in 0..2 {
                for l in 0..3 {
                    for h in 0..2 {
                        assert_eq!(layout.layer_of(layout.offset(b, p, l, h)), l);
                    }
                }
            }
        }
    }

    #[test]
    fn tensor_validation() {
        let t = AttentionTensor::new(1, 1, 2, vec![1.0, 0.0, 0.3, 0.7]).unwrap();
        t.validate(1e-4).unwrap();
        let bad = AttentionTensor::new(1, 1, 2, vec![0.9, 0.1, 0.3, 0.7]).unwrap();
        assert!(bad.validate(1e-4).is_err());
        let bad = AttentionTensor::new(1, 1, 2, vec![1.0, 0.0, 0.3, 0.6]).unwrap();
        assert!(bad.validate(1e-4).is_err());
        assert!(AttentionTensor::new(1, 1, 2, vec![1.0]).is_err());
    }

    #[test]
    fn enum_codes_roundtrip() {
        for s in [Strategy::Max, Strategy::Mean, Strategy::MeanMax] {
            assert_eq!(Strategy::from_code(s.code()), Some(s));
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
        }
        for s in [Subset::All, Subset::Inter, Subset::Intra] {
            assert_eq!(Subset::from_code(s.code()), Some(s));
            assert_eq!(s.as_str().parse::<Subset>().unwrap(), s);
        }
        assert_eq!(Strategy::from_code(3), None);
    }
}
