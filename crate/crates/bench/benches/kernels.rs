use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use discoprobe::labels::UnifiedLabel;
use discoprobe::probe::{batch_loss, class_weights, AdamW, DropoutMasks, ProbeInput, ProbeModel, TrainConfig};
use discoprobe::repr::{make_windows, pool_spans, PoolingConfig, Strategy, Subset, WindowPolicy};
use discoprobe::toy_lm::{tokenize_bytes, ToyConfig, ToyModel};
use discoprobe_bench::{adjacent_units, blobs, uniform_attention};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pooling(c: &mut Criterion) {
    let mut group = c.benchmark_group("pool_spans");
    let x = uniform_attention(32, 32, 256);
    for len in [8, 32, 96] {
        let (a, b) = adjacent_units(len);
        for strategy in [Strategy::Max, Strategy::MeanMax] {
            let cfg = PoolingConfig { strategy, subset: Subset::All };
            group.throughput(Throughput::Elements((len * len * 2) as u64));
            group.bench_with_input(BenchmarkId::new(strategy.to_string(), len), &len, |bench, _| {
                bench.iter(|| pool_spans(black_box(&x), &a, &b, cfg).unwrap())
            });
        }
    }
    group.finish();
}

fn windows(c: &mut Criterion) {
    let policy = WindowPolicy::default();
    c.bench_function("make_windows/100k", |b| b.iter(|| make_windows(black_box(100_000), policy)));
}

fn toy_forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("toy_forward");
    let model = ToyModel::new(ToyConfig { layers: 2, heads: 2, dim: 16, ..ToyConfig::default() }).unwrap();
    for n in [64usize, 256] {
        let text: String = "the river rose so we left ".chars().cycle().take(n).collect();
        let ids = tokenize_bytes(&text);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &ids, |b, ids| {
            b.iter(|| model.forward_attentions(black_box(ids)).unwrap())
        });
    }
    group.finish();
}

fn train_step(c: &mut Criterion) {
    let cfg = TrainConfig::all_layers();
    let (input_dim, classes) = (3 * 32 * 32, 17);
    let (x, y) = blobs(cfg.batch_size, input_dim, classes, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let input = ProbeInput { layers: 32, heads: 32, pooling: PoolingConfig::default(), layer: None };
    let mut model = ProbeModel::<f32>::init(
        &mut rng,
        input_dim,
        cfg.hidden,
        UnifiedLabel::ALL.to_vec(),
        input,
        cfg.input_dropout,
        cfg.hidden_dropout,
    );
    let weights = class_weights(&[1; 17]).unwrap();
    let mut opt = AdamW::from_config(&model, &cfg);
    c.bench_function("probe_train_step/3072x512x17", |b| {
        b.iter(|| {
            let masks = DropoutMasks::sample(&mut rng, cfg.batch_size, input_dim, cfg.hidden, 0.2, 0.2);
            let f = model.forward_batch(x.view(), Some(&masks)).unwrap();
            let (_, d) = batch_loss(f.logits.view(), &y, &weights).unwrap();
            let g = model.backward(&f, d.view());
            opt.step(&mut model, &g);
        })
    });
}

criterion_group!(benches, pooling, windows, toy_forward, train_step);
criterion_main!(benches);
