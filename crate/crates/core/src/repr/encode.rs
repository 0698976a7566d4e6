use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use super::{make_windows, pool_spans, AttentionTensor, PoolingConfig, ReprLayout, ReprSource, SpanRepresentation, WindowPolicy};
use crate::disrpt::{Document, RelationInstance, Split, TokenSpanSet};
use crate::error::{Error, Result};

/// Attention for one window plus the alignment of window tokens to tensor
/// positions: `positions[i]` is the half-open range of 0-based tensor
/// positions covering document token `window.start + i`.
#[derive(Debug, Clone)]
pub struct WindowAttention {
    pub tensor: AttentionTensor,
    pub positions: Vec<Range<usize>>,
}

impl WindowAttention {
    /// One tensor position per document token.
    pub fn identity(tensor: AttentionTensor) -> Self {
        let positions = (0..tensor.tokens()).map(|i| i..i + 1).collect();
        WindowAttention { tensor, positions }
    }
}

/// Anything that can produce causal attention for a document window.
pub trait AttentionSource: Sync {
    fn layers(&self) -> usize;
    fn heads(&self) -> usize;
    fn window_attention(&self, doc: &Document, window: Range<usize>) -> Result<WindowAttention>;
}

/// Serves precomputed whole-document tensors with one position per token,
/// cropping them to the requested window.
#[derive(Debug, Clone, Default)]
pub struct FixedSource {
    docs: HashMap<String, AttentionTensor>,
    layers: usize,
    heads: usize,
}

impl FixedSource {
    pub fn new(layers: usize, heads: usize) -> Self {
        FixedSource {
            docs: HashMap::new(),
            layers,
            heads,
        }
    }

    pub fn insert(&mut self, doc_id: impl Into<String>, tensor: AttentionTensor) {
        self.docs.insert(doc_id.into(), tensor);
    }
}

impl AttentionSource for FixedSource {
    fn layers(&self) -> usize {
        self.layers
    }

    fn heads(&self) -> usize {
        self.heads
    }

    fn window_attention(&self, doc: &Document, window: Range<usize>) -> Result<WindowAttention> {
        let full = self
            .docs
            .get(&doc.doc_id)
            .ok_or_else(|| Error::Model(format!("no attention for document {}", doc.doc_id)))?;
        if window.end > full.tokens() {
            return Err(Error::Shape(format!(
                "window {window:?} exceeds stored attention of {} tokens",
                full.tokens()
            )));
        }
        let n = window.len();
        let mut data = Vec::with_capacity(full.layers() * full.heads() * n * n);
        for l in 0..full.layers() {
            for h in 0..full.heads() {
                for q in window.clone() {
                    data.extend_from_slice(&full.row(l, h, q)[window.clone()]);
                }
            }
        }
        let tensor = AttentionTensor::new(full.layers(), full.heads(), n, data)?;
        Ok(WindowAttention::identity(tensor))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EncodeStats {
    pub relations: usize,
    pub direct: usize,
    /// Uncaptured relations filled with the mean of their document.
    pub document_fallback: usize,
    /// Uncaptured relations filled with the mean of their split.
    pub split_fallback: usize,
    /// Relations whose units interleave, so no span order exists.
    pub unpoolable: usize,
    pub windows_encoded: usize,
}

impl EncodeStats {
    pub fn uncaptured(&self) -> usize {
        self.relations - self.direct
    }

    pub fn uncaptured_fraction(&self) -> f64 {
        if self.relations == 0 {
            0.0
        } else {
            self.uncaptured() as f64 / self.relations as f64
        }
    }

    fn add(&mut self, other: &EncodeStats) {
        self.relations += other.relations;
        self.direct += other.direct;
        self.document_fallback += other.document_fallback;
        self.split_fallback += other.split_fallback;
        self.unpoolable += other.unpoolable;
        self.windows_encoded += other.windows_encoded;
    }
}

/// Per-document result; `None` marks relations that still need the
/// split-level fallback because the document has no captured relation.
#[derive(Debug, Clone)]
pub struct DocumentEncoding {
    pub reprs: Vec<Option<SpanRepresentation>>,
    pub stats: EncodeStats,
}

/// Orders the two units by position. Interleaved units yield `None`.
fn ordered_units(rel: &RelationInstance) -> Option<(&TokenSpanSet, &TokenSpanSet)> {
    let (a, b) = if rel.unit1.min() <= rel.unit2.min() {
        (&rel.unit1, &rel.unit2)
    } else {
        (&rel.unit2, &rel.unit1)
    };
    (a.max() < b.min()).then_some((a, b))
}

fn to_tensor_span(
    span: &TokenSpanSet,
    window: &Range<usize>,
    positions: &[Range<usize>],
) -> Result<TokenSpanSet> {
    let mut ranges: Vec<(usize, usize)> = Vec::new();
    for idx in span.indices() {
        let local = idx - 1 - window.start;
        let pos = positions.get(local).ok_or_else(|| {
            Error::Shape(format!("alignment lacks window token {local}"))
        })?;
        if pos.is_empty() {
            return Err(Error::Shape(format!("window token {local} has no tensor positions")));
        }
        match ranges.last_mut() {
            Some(last) if last.1 >= pos.start => last.1 = last.1.max(pos.end),
            _ => ranges.push((pos.start + 1, pos.end)),
        }
    }
    TokenSpanSet::from_ranges(ranges).map_err(Error::Shape)
}

pub(crate) fn mean_vector<'a>(
    layout: ReprLayout,
    vectors: impl Iterator<Item = &'a [f32]>,
) -> Option<Vec<f32>> {
    let mut sum = vec![0.0f64; layout.width()];
    let mut n = 0usize;
    for v in vectors {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += *x as f64;
        }
        n += 1;
    }
    (n > 0).then(|| sum.into_iter().map(|s| (s / n as f64) as f32).collect())
}

/// Index of the earliest window holding every token of both units, if any.
/// Relations with interleaved units are never captured.
pub fn capturing_window(rel: &RelationInstance, windows: &[Range<usize>]) -> Option<usize> {
    let (first, second) = ordered_units(rel)?;
    let (lo, hi) = (first.min() - 1, second.max());
    windows.iter().position(|w| w.start <= lo && hi <= w.end)
}

/// Counts relations the window policy captures, without computing attention.
pub fn capture_counts(
    documents: &[Document],
    relations: &[RelationInstance],
    policy: WindowPolicy,
) -> Result<(usize, usize)> {
    let lengths: HashMap<(String, &str), usize> = documents
        .iter()
        .map(|d| ((d.dataset.to_string(), d.doc_id.as_str()), d.len()))
        .collect();
    let mut captured = 0;
    for rel in relations {
        let len = *lengths
            .get(&(rel.dataset.to_string(), rel.doc_id.as_str()))
            .ok_or_else(|| Error::Corpus(format!("{}: unknown document {}", rel.dataset, rel.doc_id)))?;
        if capturing_window(rel, &make_windows(len, policy)).is_some() {
            captured += 1;
        }
    }
    Ok((captured, relations.len()))
}

/// Encodes all relations of one document.
///
/// A relation is captured by the earliest window containing every token of
/// both units; its indices are rebased to that window. Uncaptured relations
/// get the mean of the document's captured vectors.
pub fn encode_document(
    doc: &Document,
    relations: &[&RelationInstance],
    source: &dyn AttentionSource,
    policy: WindowPolicy,
    cfg: PoolingConfig,
) -> Result<DocumentEncoding> {
    let layout = ReprLayout::new(source.layers(), source.heads(), cfg);
    let mut stats = EncodeStats {
        relations: relations.len(),
        ..Default::default()
    };
    let windows = make_windows(doc.len(), policy);
    let mut by_window: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut units = Vec::with_capacity(relations.len());
    for (i, rel) in relations.iter().enumerate() {
        let max = rel.unit1.max().max(rel.unit2.max());
        if max > doc.len() {
            return Err(Error::Corpus(format!(
                "relation references token {max} beyond document {} ({} tokens)",
                doc.doc_id,
                doc.len()
            )));
        }
        let ordered = ordered_units(rel);
        if ordered.is_none() {
            stats.unpoolable += 1;
        }
        units.push(ordered);
        if let Some(w) = capturing_window(rel, &windows) {
            by_window.entry(w).or_default().push(i);
        }
    }

    let mut reprs: Vec<Option<SpanRepresentation>> = vec![None; relations.len()];
    for (w, members) in by_window {
        let window = windows[w].clone();
        let attn = source.window_attention(doc, window.clone())?;
        if attn.positions.len() != window.len() {
            return Err(Error::Shape(format!(
                "alignment covers {} tokens, window has {}",
                attn.positions.len(),
                window.len()
            )));
        }
        stats.windows_encoded += 1;
        for i in members {
            let (first, second) = units[i].expect("captured relations are ordered");
            let a = to_tensor_span(first, &window, &attn.positions)?;
            let b = to_tensor_span(second, &window, &attn.positions)?;
            reprs[i] = Some(pool_spans(&attn.tensor, &a, &b, cfg)?);
            stats.direct += 1;
        }
    }

    let mean = mean_vector(
        layout,
        reprs.iter().flatten().map(|r| r.values.as_slice()),
    );
    if let Some(mean) = mean {
        for r in reprs.iter_mut().filter(|r| r.is_none()) {
            *r = Some(SpanRepresentation {
                layout,
                values: mean.clone(),
                source: ReprSource::FallbackMean,
            });
            stats.document_fallback += 1;
        }
    }
    Ok(DocumentEncoding { reprs, stats })
}

/// Encodes relations across documents (in parallel), then fills relations of
/// documents without any captured relation with the mean over their split.
/// Output order follows `relations`.
pub fn encode_relations(
    documents: &[Document],
    relations: &[RelationInstance],
    source: &dyn AttentionSource,
    policy: WindowPolicy,
    cfg: PoolingConfig,
) -> Result<(Vec<SpanRepresentation>, EncodeStats)> {
    let layout = ReprLayout::new(source.layers(), source.heads(), cfg);
    let doc_index: HashMap<(String, &str), &Document> = documents
        .iter()
        .map(|d| ((d.dataset.to_string(), d.doc_id.as_str()), d))
        .collect();

    let mut groups: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
    for (i, rel) in relations.iter().enumerate() {
        groups
            .entry((rel.dataset.to_string(), rel.doc_id.clone()))
            .or_default()
            .push(i);
    }
    let groups: Vec<_> = groups.into_iter().collect();

    let encoded: Vec<Result<(Vec<usize>, DocumentEncoding)>> = groups
        .into_par_iter()
        .map(|((dataset, doc_id), members)| {
            let doc = doc_index
                .get(&(dataset.clone(), doc_id.as_str()))
                .ok_or_else(|| Error::Corpus(format!("{dataset}: unknown document {doc_id}")))?;
            let rels: Vec<&RelationInstance> = members.iter().map(|&i| &relations[i]).collect();
            let enc = encode_document(doc, &rels, source, policy, cfg)?;
            Ok((members, enc))
        })
        .collect();

    let mut out: Vec<Option<SpanRepresentation>> = vec![None; relations.len()];
    let mut stats = EncodeStats::default();
    for item in encoded {
        let (members, enc) = item?;
        stats.add(&enc.stats);
        for (i, r) in members.into_iter().zip(enc.reprs) {
            out[i] = r;
        }
    }

    let mut split_means: HashMap<Split, Vec<f32>> = HashMap::new();
    for split in Split::ALL {
        let direct = out
            .iter()
            .zip(relations)
            .filter(|(r, rel)| rel.split == split && r.as_ref().is_some_and(|r| r.source == ReprSource::Direct))
            .map(|(r, _)| r.as_ref().unwrap().values.as_slice());
        if let Some(mean) = mean_vector(layout, direct) {
            split_means.insert(split, mean);
        }
    }
    let mut result = Vec::with_capacity(relations.len());
    for (r, rel) in out.into_iter().zip(relations) {
        match r {
            Some(r) => result.push(r),
            None => {
                let mean = split_means.get(&rel.split).ok_or_else(|| {
                    Error::Corpus(format!(
                        "no relation of the {} split could be captured by any window",
                        rel.split
                    ))
                })?;
                stats.split_fallback += 1;
                result.push(SpanRepresentation {
                    layout,
                    values: mean.clone(),
                    source: ReprSource::FallbackMean,
                });
            }
        }
    }
    Ok((result, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disrpt::{parse_token_spans, DatasetId, Direction};

    fn doc(n: usize) -> Document {
        Document {
            doc_id: "d".into(),
            tokens: (0..n).map(|i| format!("t{i}")).collect(),
            dataset: "eng.rst.gum".parse::<DatasetId>().unwrap(),
        }
    }

    fn rel(u1: &str, u2: &str) -> RelationInstance {
        RelationInstance {
            dataset: "eng.rst.gum".parse().unwrap(),
            doc_id: "d".into(),
            unit1: parse_token_spans(u1).unwrap(),
            unit2: parse_token_spans(u2).unwrap(),
            unit1_text: String::new(),
            unit2_text: String::new(),
            direction: Direction::LeftToRight,
            original_label: "x".into(),
            unified_label: None,
            split: Split::Train,
        }
    }

    /// Uniform causal attention: row q spreads 1/(q+1) over keys 0..=q.
    fn uniform(n: usize) -> AttentionTensor {
        let mut data = vec![0.0; n * n];
        for q in 0..n {
            for k in 0..=q {
                data[q * n + k] = 1.0 / (q + 1) as f32;
            }
        }
        AttentionTensor::new(1, 1, n, data).unwrap()
    }

    fn source(n: usize) -> FixedSource {
        let mut s = FixedSource::new(1, 1);
        s.insert("d", uniform(n));
        s
    }

    #[test]
    fn captured_by_first_window() {
        let d = doc(10);
        let r = rel("2-3", "5-6");
        let enc = encode_document(
            &d,
            &[&r],
            &source(10),
            WindowPolicy::new(8, 4).unwrap(),
            PoolingConfig::default(),
        )
        .unwrap();
        let repr = enc.reprs[0].as_ref().unwrap();
        assert_eq!(repr.source, ReprSource::Direct);
        assert_eq!(enc.stats.windows_encoded, 1);
        // C: queries 4..=5 to keys 1..=2 under uniform rows → max 1/5.
        assert_eq!(repr.values[2], 0.2);
    }

    #[test]
    fn rebasing_uses_window_coordinates() {
        // Relation only fits the window starting at 4; the cropped tensor is
        // uniform in window coordinates.
        let d = doc(10);
        let r = rel("6", "8");
        let enc = encode_document(
            &d,
            &[&r],
            &source(10),
            WindowPolicy::new(4, 2).unwrap(),
            PoolingConfig::default(),
        )
        .unwrap();
        let repr = enc.reprs[0].as_ref().unwrap();
        // Window [4,8): token 6 → local 1, token 8 → local 3.
        let full = uniform(10);
        assert_eq!(repr.values[0], full.get(0, 0, 5, 5));
        assert_eq!(repr.values[1], full.get(0, 0, 7, 7));
        assert_eq!(repr.values[2], full.get(0, 0, 7, 5));
    }

    #[test]
    fn uncaptured_gets_document_mean() {
        let d = doc(10);
        let far = rel("1", "9");
        let a = rel("1", "2");
        let b = rel("3", "4");
        let enc = encode_document(
            &d,
            &[&far, &a, &b],
            &source(10),
            WindowPolicy::new(4, 2).unwrap(),
            PoolingConfig::default(),
        )
        .unwrap();
        let ra = enc.reprs[1].as_ref().unwrap();
        let rb = enc.reprs[2].as_ref().unwrap();
        let rf = enc.reprs[0].as_ref().unwrap();
        assert_eq!(rf.source, ReprSource::FallbackMean);
        for j in 0..3 {
            let want = ((ra.values[j] as f64 + rb.values[j] as f64) / 2.0) as f32;
            assert_eq!(rf.values[j], want);
        }
        assert_eq!(enc.stats.direct, 2);
        assert_eq!(enc.stats.document_fallback, 1);
    }

    #[test]
    fn split_fallback_for_documents_without_captures() {
        let mut other = doc(10);
        other.doc_id = "e".into();
        let mut src = source(10);
        src.insert("e", uniform(10));
        let mut far = rel("1", "9");
        far.doc_id = "e".into();
        let rels = vec![rel("1", "2"), far, rel("5", "6")];
        let (reprs, stats) = encode_relations(
            &[doc(10), other],
            &rels,
            &src,
            WindowPolicy::new(4, 2).unwrap(),
            PoolingConfig::default(),
        )
        .unwrap();
        assert_eq!(stats.split_fallback, 1);
        assert_eq!(stats.uncaptured(), 1);
        assert_eq!(reprs[1].source, ReprSource::FallbackMean);
        for j in 0..3 {
            let want = ((reprs[0].values[j] as f64 + reprs[2].values[j] as f64) / 2.0) as f32;
            assert_eq!(reprs[1].values[j], want);
        }
    }

    #[test]
    fn unit_order_and_interleaving() {
        let d = doc(6);
        let swapped = rel("4-5", "1-2");
        let interleaved = rel("1,4", "2-3");
        let normal = rel("1-2", "4-5");
        let enc = encode_document(
            &d,
            &[&swapped, &interleaved, &normal],
            &source(6),
            WindowPolicy::default(),
            PoolingConfig::default(),
        )
        .unwrap();
        assert_eq!(enc.reprs[0], enc.reprs[2]);
        assert_eq!(enc.stats.unpoolable, 1);
        assert_eq!(enc.reprs[1].as_ref().unwrap().source, ReprSource::FallbackMean);
    }

    #[test]
    fn out_of_range_relation_errors() {
        let d = doc(4);
        let r = rel("1", "5");
        assert!(encode_document(&d, &[&r], &source(4), WindowPolicy::default(), PoolingConfig::default()).is_err());
    }

    #[test]
    fn multi_position_alignment() {
        let positions = vec![0..2, 3..4, 5..8];
        let span = parse_token_spans("1-3").unwrap();
        let t = to_tensor_span(&span, &(0..3), &positions).unwrap();
        assert_eq!(t.ranges(), &[(1, 2), (4, 4), (6, 8)]);
        let contiguous = vec![0..2, 2..4];
        let t = to_tensor_span(&parse_token_spans("1-2").unwrap(), &(0..2), &contiguous).unwrap();
        assert_eq!(t.ranges(), &[(1, 4)]);
    }
}
