//! Fixtures shared by the benchmarks.

use discoprobe::repr::AttentionTensor;
use discoprobe::TokenSpanSet;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Causal attention with uniform rows.
pub fn uniform_attention(layers: usize, heads: usize, n: usize) -> AttentionTensor {
    let mut data = vec![0f32; layers * heads * n * n];
    for lh in 0..layers * heads {
        for q in 0..n {
            let row = &mut data[(lh * n + q) * n..][..=q];
            row.fill(1.0 / (q + 1) as f32);
        }
    }
    AttentionTensor::new(layers, heads, n, data).expect("valid shape")
}

/// Two adjacent contiguous units of `len` tokens each, starting at token 1.
pub fn adjacent_units(len: usize) -> (TokenSpanSet, TokenSpanSet) {
    let a = TokenSpanSet::from_ranges(vec![(1, len)]).expect("valid span");
    let b = TokenSpanSet::from_ranges(vec![(len + 1, 2 * len)]).expect("valid span");
    (a, b)
}

/// Gaussian-free blobs: `classes` clusters in `dim` dimensions.
pub fn blobs(n: usize, dim: usize, classes: usize, seed: u64) -> (Array2<f32>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let x = Array2::from_shape_fn((n, dim), |(i, j)| {
        rng.random_range(-0.5f32..0.5) + if j % classes == y[i] { 2.0 } else { 0.0 }
    });
    (x, y)
}
