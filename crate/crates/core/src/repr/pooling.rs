use super::{AttentionTensor, Block, Pool, PoolingConfig, ReprLayout, ReprSource, SpanRepresentation};
use crate::disrpt::TokenSpanSet;
use crate::error::{Error, Result};

#[derive(Clone, Copy)]
struct Acc {
    max: f32,
    sum: f64,
    count: usize,
}

impl Acc {
    fn new() -> Self {
        Acc {
            max: f32::NEG_INFINITY,
            sum: 0.0,
            count: 0,
        }
    }

    #[inline]
    fn push(&mut self, v: f32) {
        if v > self.max {
            self.max = v;
        }
        self.sum += v as f64;
        self.count += 1;
    }

    fn value(&self, pool: Pool) -> f32 {
        assert!(self.count > 0, "pooled index set is empty");
        match pool {
            Pool::Max => self.max,
            Pool::Mean => (self.sum / self.count as f64) as f32,
        }
    }
}

fn zero_based(span: &TokenSpanSet) -> Vec<usize> {
    span.indices().map(|i| i - 1).collect()
}

/// Pools attention scores of one relation.
///
/// `first` and `second` are 1-based token positions in the tensor's
/// coordinates; `first` must end before `second` starts. Within-span pools run
/// over the lower triangle including the diagonal (`key <= query`); the cross
/// pool takes queries in `second` and keys in `first`. Sums for mean pooling
/// are accumulated in f64 in ascending (query, key) order.
pub fn pool_spans(
    x: &AttentionTensor,
    first: &TokenSpanSet,
    second: &TokenSpanSet,
    cfg: PoolingConfig,
) -> Result<SpanRepresentation> {
    let n = x.tokens();
    for span in [first, second] {
        if span.max() > n {
            return Err(Error::Shape(format!(
                "span index {} out of range for {n} tokens",
                span.max()
            )));
        }
    }
    if first.max() >= second.min() {
        return Err(Error::Shape(format!(
            "first span ({first}) must end before second span ({second}) starts"
        )));
    }

    let i1 = zero_based(first);
    let i2 = zero_based(second);
    let layout = ReprLayout::new(x.layers(), x.heads(), cfg);
    let mut values = vec![0.0f32; layout.width()];
    let blocks = cfg.subset.blocks();
    let parts = cfg.strategy.parts();

    for layer in 0..x.layers() {
        for head in 0..x.heads() {
            for (bpos, block) in blocks.iter().enumerate() {
                let mut acc = Acc::new();
                match block {
                    Block::D1 | Block::D2 => {
                        let idx = if *block == Block::D1 { &i1 } else { &i2 };
                        for (qi, &q) in idx.iter().enumerate() {
                            let row = x.row(layer, head, q);
                            for &k in &idx[..=qi] {
                                acc.push(row[k]);
                            }
                        }
                    }
                    Block::C => {
                        for &q in &i2 {
                            let row = x.row(layer, head, q);
                            for &k in &i1 {
                                acc.push(row[k]);
                            }
                        }
                    }
                }
                for (ppos, pool) in parts.iter().enumerate() {
                    values[layout.offset(bpos, ppos, layer, head)] = acc.value(*pool);
                }
            }
        }
    }
    Ok(SpanRepresentation {
        layout,
        values,
        source: ReprSource::Direct,
    })
}

/// Entries of `a` belonging to one layer, keeping block and part order.
pub fn layer_slice(repr: &SpanRepresentation, layer: usize) -> Result<Vec<f32>> {
    layer_slice_values(&repr.layout, &repr.values, layer)
}

pub fn layer_slice_values(layout: &ReprLayout, values: &[f32], layer: usize) -> Result<Vec<f32>> {
    if layer >= layout.layers {
        return Err(Error::Shape(format!(
            "layer {layer} out of range for {} layers",
            layout.layers
        )));
    }
    if values.len() != layout.width() {
        return Err(Error::Shape(format!(
            "representation has {} values, layout expects {}",
            values.len(),
            layout.width()
        )));
    }
    let mut out = Vec::with_capacity(layout.layer_width());
    for b in 0..layout.pooling.subset.blocks().len() {
        for p in 0..layout.pooling.strategy.parts().len() {
            let start = layout.offset(b, p, layer, 0);
            out.extend_from_slice(&values[start..start + layout.heads]);
        }
    }
    Ok(out)
}
