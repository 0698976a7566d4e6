mod common;

use common::*;
use discoprobe::disrpt::Split;
use discoprobe::experiment::{aggregate_runs, layer_importance, run_layerwise, run_regime, Regime, RunSettings};
use discoprobe::labels::UnifiedLabel;
use discoprobe::pipeline::{run_experiment, write_run};
use discoprobe::probe::{ProbeInput, ProbeModel, TrainConfig};
use discoprobe::repr::{PoolingConfig, ReprLayout, ReprStore, Strategy, Subset};
use ndarray::array;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CLASSES: [UnifiedLabel; 3] = [UnifiedLabel::Temporal, UnifiedLabel::Causal, UnifiedLabel::Elaboration];

fn layout() -> ReprLayout {
    ReprLayout::new(2, 2, PoolingConfig { strategy: Strategy::Max, subset: Subset::All })
}

fn quick() -> TrainConfig {
    TrainConfig {
        batch_size: 16,
        learning_rate: 1e-3,
        hidden: 32,
        epochs: 30,
        min_update_steps: 0,
        ..TrainConfig::all_layers()
    }
}

/// Layer-0 columns are noise; each class lights up its own layer-1 columns.
/// With `swap`, Temporal and Causal trade feature patterns.
fn features<R: Rng>(rng: &mut R, class: usize, swap: bool) -> Vec<f32> {
    let layout = layout();
    let c = match (swap, class) {
        (true, 0) => 1,
        (true, 1) => 0,
        _ => class,
    };
    (0..layout.width())
        .map(|j| {
            let noise = rng.random_range(-0.5f32..0.5);
            if layout.layer_of(j) == 1 && (j / 2) % 3 == c {
                noise + 2.0
            } else {
                noise
            }
        })
        .collect()
}

/// `(dataset, swap)` per language; 60 train and 30 test rows each.
fn store(langs: &[(&'static str, bool)]) -> ReprStore {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut rows = Vec::new();
    for &(dataset, swap) in langs {
        for (split, n) in [(Split::Train, 60), (Split::Test, 30)] {
            for i in 0..n {
                let class = i % 3;
                rows.push(StoreRow {
                    dataset,
                    split,
                    label: CLASSES[class],
                    values: features(&mut rng, class, swap),
                });
            }
        }
    }
    make_store(layout(), rows)
}

fn three_languages() -> ReprStore {
    store(&[("eng.rst.a", false), ("deu.rst.b", true), ("eus.rst.c", false)])
}

#[test]
fn mono_trains_one_probe_per_language() {
    let s = three_languages();
    let (r, probes) = run_regime(&s, Regime::Mono, &quick()).unwrap();
    assert_eq!(probes.len(), 3);
    assert_eq!(r.train_partitions, ["deu", "eng", "eus"]);
    assert_eq!(r.test_partitions, ["deu", "eng", "eus"]);
    assert_eq!(r.accuracy.len(), 3);
    for (i, row) in r.accuracy.iter().enumerate() {
        assert_eq!(row.len(), 3);
        let diag = row[i].unwrap();
        assert!(diag > 0.95, "in-language accuracy {diag}");
        for (j, cell) in row.iter().enumerate() {
            assert!(diag >= cell.unwrap(), "train {i} test {j}");
        }
    }
    // eng and deu disagree on two of three classes.
    assert!(r.accuracy[1][0].unwrap() < 0.5);
    assert!(r.accuracy[1][2].unwrap() > 0.95);
}

#[test]
fn swapped_language_shows_in_confusion() {
    let s = three_languages();
    let (r, _) = run_regime(&s, Regime::Mono, &quick()).unwrap();
    let eng = r.train_partitions.iter().position(|p| p == "eng").unwrap();
    let m = &r.confusion[eng];
    assert_eq!(m.total(), 90);
    let t = m.labels.iter().position(|&l| l == UnifiedLabel::Temporal).unwrap();
    let c = m.labels.iter().position(|&l| l == UnifiedLabel::Causal).unwrap();
    // deu contributes 10 test rows per class.
    assert!(m.counts[t][c] >= 9, "{:?}", m.counts);
    assert!(m.counts[c][t] >= 9, "{:?}", m.counts);
}

#[test]
fn family_regime_skips_isolate() {
    let s = three_languages();
    let (r, probes) = run_regime(&s, Regime::MultiLang, &quick()).unwrap();
    assert_eq!(r.train_partitions, ["Germanic", "Indo-European"]);
    assert_eq!(r.skipped, ["eus"]);
    assert_eq!(probes.len(), 2);
    assert!(r.accuracy.iter().all(|row| row.len() == 3));
}

#[test]
fn family_regime_needs_two_languages() {
    let s = store(&[("eng.rst.a", false)]);
    let e = run_regime(&s, Regime::MultiLang, &quick()).unwrap_err();
    assert!(e.to_string().contains("≥2 languages"), "{e}");
}

#[test]
fn layer_curves_follow_signal() {
    let s = store(&[("eng.rst.a", false), ("deu.rst.b", false)]);
    let cfg = TrainConfig { epochs: 40, ..quick() };
    let lw = run_layerwise(&s, Regime::MultiAll, &cfg).unwrap();
    assert_eq!(lw.layers, 2);
    let at = |layer: usize, group: &str| {
        lw.points
            .iter()
            .find(|p| p.layer == layer && p.group == group)
            .unwrap_or_else(|| panic!("no point for {layer} {group}"))
    };
    let (l0, l1) = (at(0, "all").accuracy.unwrap(), at(1, "all").accuracy.unwrap());
    assert!(l1 > l0 + 0.3, "layer 0 {l0}, layer 1 {l1}");
    assert_eq!(at(1, "all").support, 60);
    assert_eq!(at(1, "language:eng").support, 30);
    assert_eq!(at(1, "family:Germanic").support, 60);
    assert_eq!(at(1, "class:temporal").support, 20);
    // Labels absent from the test split have no accuracy.
    let missing = at(1, "label:mode");
    assert_eq!((missing.accuracy, missing.support), (None, 0));

    let (r, _) = run_regime(&s, Regime::MultiAll, &quick()).unwrap();
    let all = r.accuracy[0].iter().map(|a| a.unwrap()).sum::<f64>() / 2.0;
    assert!(all >= l1 - 0.05, "all-layer {all} vs layer 1 {l1}");
}

#[test]
fn importance_worked_example() {
    // L=2, H=2, inter max: columns [l0h0, l0h1, l1h0, l1h1].
    let layout = ReprLayout::new(2, 2, PoolingConfig { strategy: Strategy::Max, subset: Subset::Inter });
    let input = ProbeInput { layers: 2, heads: 2, pooling: layout.pooling, layer: None };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = ProbeModel::<f32>::init(&mut rng, 4, 2, CLASSES[..2].to_vec(), input, 0.0, 0.0);
    model.w1 = array![[1.0, -1.0, 0.0, 2.0], [0.5, 0.0, -1.0, 1.0]];
    model.w2 = array![[1.0, 2.0], [-1.0, 0.0]];
    // M = W2 W1 = [[2, -1, -2, 4], [-1, 1, 0, -2]]
    let scores = layer_importance(&model, &layout).unwrap();
    assert_eq!(scores, vec![2.0 + 1.0 + 1.0 + 1.0, 2.0 + 4.0 + 0.0 + 2.0]);
    assert_eq!(scores, oracle_importance(&model, &layout));
}

fn settings(s: &ReprStore) -> RunSettings {
    RunSettings {
        layout: s.layout,
        regimes: vec![Regime::Mono, Regime::MultiAll],
        layerwise: true,
        train: quick(),
        layerwise_train: TrainConfig { epochs: 5, ..quick() },
        mapping_hash: Some("abc".into()),
    }
}

fn read_dir_sorted(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = walkdir(dir)
        .into_iter()
        .map(|p| (p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn walkdir(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut files = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files.extend(walkdir(&p));
        } else {
            files.push(p);
        }
    }
    files
}

#[test]
fn reports_are_deterministic_and_tagged() {
    let s = store(&[("eng.rst.a", false), ("deu.rst.b", false)]);
    let settings = settings(&s);
    let tmp = tempfile::tempdir().unwrap();
    let mut snapshots = Vec::new();
    for run in 0..2 {
        let dir = tmp.path().join(format!("run{run}"));
        let (results, probes) = run_experiment(&s, &settings, 4).unwrap();
        write_run(&dir, &results, &probes).unwrap();
        snapshots.push(read_dir_sorted(&dir));
    }
    assert_eq!(snapshots[0], snapshots[1]);

    let (results, _) = run_experiment(&s, &settings, 4).unwrap();
    let tag = format!("# config_hash={} seed=4", results.config_hash);
    assert_eq!(results.config_hash.len(), 16);
    let csvs: Vec<&(String, Vec<u8>)> = snapshots[0].iter().filter(|(n, _)| n.ends_with(".csv")).collect();
    assert!(csvs.len() >= 8);
    for (name, bytes) in csvs {
        let text = String::from_utf8(bytes.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), tag, "{name}");
        let width = lines.next().unwrap().split(',').count();
        assert!(lines.all(|l| l.split(',').count() == width), "{name} is ragged");
    }

    let (other, _) = run_experiment(&s, &settings, 5).unwrap();
    assert_eq!(other.config_hash, results.config_hash);
    let changed = RunSettings { train: TrainConfig { hidden: 16, ..quick() }, ..settings };
    assert_ne!(discoprobe::experiment::config_hash(&changed), results.config_hash);
}

#[test]
fn dataset_table_has_mean_column() {
    let s = store(&[("eng.rst.a", false), ("deu.rst.b", true)]);
    let settings = RunSettings { regimes: vec![Regime::Mono], layerwise: false, ..settings(&s) };
    let (results, probes) = run_experiment(&s, &settings, 0).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    write_run(tmp.path(), &results, &probes).unwrap();
    let text = std::fs::read_to_string(tmp.path().join("datasets_mono.csv")).unwrap();
    let lines: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(lines[0], "train,deu.rst.b,eng.rst.a,mean");
    for line in &lines[1..] {
        let cells: Vec<f64> = line.split(',').skip(1).map(|c| c.parse().unwrap()).collect();
        let mean = (cells[0] + cells[1]) / 2.0;
        assert!((cells[2] - mean).abs() < 1e-6, "{line}");
    }
}

#[test]
fn seeds_aggregate() {
    let s = store(&[("eng.rst.a", false), ("deu.rst.b", false)]);
    let settings = RunSettings { regimes: vec![Regime::MultiAll], ..settings(&s) };
    let runs: Vec<_> = (0..2).map(|seed| run_experiment(&s, &settings, seed).unwrap().0).collect();
    let agg = aggregate_runs(&runs).unwrap();
    assert_eq!(agg.seeds, vec![0, 1]);
    assert_eq!(agg.regimes[0].confusion[0].total(), 120);
    let a = |r: &discoprobe::RunResults| r.regimes[0].accuracy[0][0].unwrap();
    assert!((a(&agg) - (a(&runs[0]) + a(&runs[1])) / 2.0).abs() < 1e-12);
    let imp = (runs[0].regimes[0].importance[0][1] + runs[1].regimes[0].importance[0][1]) / 2.0;
    assert!((agg.regimes[0].importance[0][1] - imp).abs() < 1e-12);

    let other = RunSettings { layerwise: false, ..settings };
    let mismatched = run_experiment(&s, &other, 2).unwrap().0;
    assert!(aggregate_runs(&[runs[0].clone(), mismatched]).is_err());
}
