use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use discoprobe::disrpt::{load_benchmark, read_jsonl, write_jsonl, RelationRecord};
use discoprobe::experiment::{
    aggregate_runs, confusion_csv, feature_matrix, read_results, select_rows, summary, training_partitions,
    write_manifest, write_report, write_results, ConfusionMatrix, RunResults, RunSettings, RESULTS_FILE,
};
use discoprobe::labels::{apply_mapping, load_mapping, MappingTable};
use discoprobe::pipeline::{build_store, run_experiment, write_run, RunProbes};
use discoprobe::probe::{evaluate, log_path, read_checkpoint, TrainConfig, TrainingLog};
use discoprobe::repr::{
    read_repr_store, write_repr_store, AtsrDirSource, AttentionSource, PoolingConfig, WindowPolicy,
};
use discoprobe::{Document, RelationInstance, ToyConfig, ToySource};

use crate::{EvalArgs, ExtractArgs, IngestArgs, Invalid, MapArgs, ReportArgs, TrainArgs};

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(Invalid(format!("{what} {} does not exist", path.display())).into());
    }
    Ok(())
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(())
}

pub fn ingest(a: &IngestArgs) -> Result<()> {
    if !a.corpus.is_dir() {
        return Err(Invalid(format!("corpus directory {} does not exist", a.corpus.display())).into());
    }
    let corpora = load_benchmark(&a.corpus)?;
    if corpora.is_empty() {
        return Err(Invalid(format!("no DISRPT datasets found under {}", a.corpus.display())).into());
    }
    let docs_path = a.docs.clone().unwrap_or_else(|| a.out.with_extension("docs.jsonl"));
    create_parent(&a.out)?;
    create_parent(&docs_path)?;
    let records: Vec<RelationRecord> = corpora
        .iter()
        .flat_map(|c| c.relations().map(RelationRecord::from))
        .collect();
    write_jsonl(&a.out, &records)?;
    write_jsonl(&docs_path, corpora.iter().flat_map(|c| c.documents.values()))?;
    for c in &corpora {
        let n = c.counts();
        println!("{}\ttrain {}\tdev {}\ttest {}", c.dataset, n.train, n.dev, n.test);
    }
    println!("{} relations -> {}", records.len(), a.out.display());
    println!("documents -> {}", docs_path.display());
    Ok(())
}

fn read_relations(path: &Path) -> Result<Vec<RelationInstance>> {
    require_file(path, "relation file")?;
    Ok(read_jsonl::<RelationRecord>(path)?
        .into_iter()
        .map(RelationRecord::into_instance)
        .collect())
}

fn mapping_table(path: Option<&Path>) -> Result<MappingTable> {
    match path {
        Some(p) => {
            require_file(p, "mapping file")?;
            Ok(load_mapping(p)?)
        }
        None => Ok(MappingTable::builtin()),
    }
}

pub fn map(a: &MapArgs) -> Result<()> {
    let table = mapping_table(a.mapping.as_deref())?;
    let mut relations = read_relations(&a.input)?;
    let report = apply_mapping(&mut relations, &table);
    create_parent(&a.out)?;
    write_jsonl(&a.out, relations.iter().map(RelationRecord::from))?;
    if let Some(path) = &a.report {
        create_parent(path)?;
        std::fs::write(path, report.to_text()).with_context(|| format!("cannot write {}", path.display()))?;
    }
    let unmapped = report.unmapped_total();
    println!(
        "{} of {} relations mapped; {unmapped} unmapped ({} distinct labels)",
        relations.len() - unmapped,
        relations.len(),
        report.unmapped.len()
    );
    if a.strict && unmapped > 0 {
        return Err(Invalid(format!("{unmapped} relations have no mapping; see the coverage report")).into());
    }
    Ok(())
}

pub fn extract(a: &ExtractArgs) -> Result<()> {
    let policy = WindowPolicy::new(a.nmax, a.stride).map_err(|e| Invalid(e.to_string()))?;
    let source: Box<dyn AttentionSource> = if a.source == "toy" {
        let cfg = ToyConfig {
            layers: a.toy_layers,
            heads: a.toy_heads,
            dim: a.toy_dim,
            max_positions: a.toy_positions,
            seed: a.toy_seed,
            ..ToyConfig::default()
        };
        Box::new(ToySource::new(cfg).map_err(|e| Invalid(format!("toy model: {e}")))?)
    } else if let Some(dir) = a.source.strip_prefix("atsr:") {
        let dir = PathBuf::from(dir);
        if !dir.is_dir() {
            return Err(Invalid(format!("attention directory {} does not exist", dir.display())).into());
        }
        Box::new(AtsrDirSource::open(&dir)?)
    } else {
        return Err(Invalid(format!("unknown source {:?}; expected `toy` or `atsr:<dir>`", a.source)).into());
    };
    let relations = read_relations(&a.input)?;
    require_file(&a.docs, "document file")?;
    let documents: Vec<Document> = read_jsonl(&a.docs)?;
    let pooling = PoolingConfig {
        strategy: a.strategy(),
        subset: a.subset(),
    };
    let (store, stats) = build_store(&documents, &relations, source.as_ref(), policy, pooling)?;
    create_parent(&a.out)?;
    write_repr_store(&a.out, &store)?;
    println!(
        "{} relations, width {}: {} direct, {} document fallback, {} split fallback ({:.4} uncaptured)",
        stats.relations,
        store.layout.width(),
        stats.direct,
        stats.document_fallback,
        stats.split_fallback,
        stats.uncaptured_fraction()
    );
    println!("representations -> {}", a.out.display());
    Ok(())
}

fn train_configs(a: &TrainArgs) -> Result<(TrainConfig, TrainConfig)> {
    let train = TrainConfig {
        batch_size: a.batch_size,
        learning_rate: a.lr,
        weight_decay: a.weight_decay,
        hidden: a.hidden,
        input_dropout: a.input_dropout,
        hidden_dropout: a.hidden_dropout,
        epochs: a.epochs,
        min_update_steps: a.min_steps,
        ..TrainConfig::all_layers()
    };
    let layerwise = TrainConfig {
        epochs: a.layerwise_epochs,
        min_update_steps: a.layerwise_min_steps,
        ..train.clone()
    };
    for cfg in [&train, &layerwise] {
        cfg.validate().map_err(|e| Invalid(e.to_string()))?;
    }
    Ok((train, layerwise))
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let (train, layerwise_train) = train_configs(a)?;
    let mut regimes = a.regime.clone();
    regimes.dedup();
    let mut seeds = a.seed.clone();
    seeds.sort();
    seeds.dedup();
    let mapping_hash = match &a.mapping {
        Some(p) => Some(mapping_table(Some(p))?.content_hash()),
        None => None,
    };
    require_file(&a.reprs, "representation store")?;
    let store = read_repr_store(&a.reprs)?;
    for &r in &regimes {
        let (_, skipped) = training_partitions(&store, r)?;
        for lang in skipped {
            eprintln!("warning: {r}: language {lang} has no family partner and is skipped");
        }
    }
    let settings = RunSettings {
        layout: store.layout,
        regimes,
        layerwise: a.layerwise,
        train,
        layerwise_train,
        mapping_hash,
    };

    let results = if let [seed] = seeds[..] {
        let (results, probes) = run_experiment(&store, &settings, seed)?;
        write_run(&a.out, &results, &probes)?;
        results
    } else {
        let mut runs = Vec::new();
        for &seed in &seeds {
            let (results, probes) = run_experiment(&store, &settings, seed)?;
            let dir = a.out.join(format!("seed-{seed}"));
            write_run(&dir, &results, &probes)?;
            log::info!("seed {seed} -> {}", dir.display());
            runs.push(results);
        }
        let agg = aggregate_runs(&runs)?;
        write_run(&a.out, &agg, &RunProbes::new())?;
        agg
    };
    print!("{}", summary(&results));
    println!("run -> {}", a.out.display());
    Ok(())
}

/// `# config_hash=… seed=…` for a probe, read from its run directory when
/// the probe lives in one.
fn probe_preamble(probe: &Path) -> String {
    let run = probe.parent().and_then(Path::parent).map(|d| d.join(RESULTS_FILE));
    let seed = std::fs::read_to_string(log_path(probe))
        .ok()
        .and_then(|t| serde_json::from_str::<TrainingLog>(&t).ok())
        .map(|l| l.config.seed.to_string());
    let hash = run
        .filter(|p| p.is_file())
        .and_then(|p| read_results(&p).ok())
        .map(|r| r.config_hash);
    format!(
        "# config_hash={} seed={}\n",
        hash.as_deref().unwrap_or("N/A"),
        seed.as_deref().unwrap_or("N/A")
    )
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    require_file(&a.probe, "probe")?;
    require_file(&a.reprs, "representation store")?;
    let model = read_checkpoint(&a.probe)?;
    let store = read_repr_store(&a.reprs)?;
    let input = &model.input;
    if (input.layers, input.heads, input.pooling) != (store.layout.layers, store.layout.heads, store.layout.pooling) {
        return Err(Invalid(format!(
            "probe expects {}x{} {:?} representations but the store has {}x{} {:?}",
            input.layers, input.heads, input.pooling, store.layout.layers, store.layout.heads, store.layout.pooling
        ))
        .into());
    }
    let rows = select_rows(&store, a.split, &a.partition);
    if rows.is_empty() {
        return Err(Invalid(format!("no labelled {} rows match {}", a.split, a.partition)).into());
    }
    let x = feature_matrix(&store, &rows, input.layer)?;
    let gold: Vec<_> = rows
        .iter()
        .map(|&i| store.meta[i].unified_label.expect("selected rows are labelled"))
        .collect();
    let datasets: Vec<String> = rows.iter().map(|&i| store.meta[i].dataset.to_string()).collect();
    let ev = evaluate(&model, x.view(), &gold, &datasets)?;
    println!("accuracy {:.6} ({} instances)", ev.accuracy, ev.total);
    for (d, s) in &ev.per_dataset {
        println!("  {d}\t{:.6}\t{}/{}", s.accuracy, s.correct, s.total);
    }
    println!("mean over datasets {:.6}", ev.mean_dataset_accuracy);

    if let Some(path) = &a.confusion {
        let m = ConfusionMatrix::from_predictions(&model.classes, &gold, &ev.predictions);
        let preamble = probe_preamble(&a.probe);
        let stem = path.file_stem().unwrap_or_default().to_string_lossy();
        let norm = path.with_file_name(format!("{stem}_norm.csv"));
        create_parent(path)?;
        for (p, normalized) in [(path, false), (&norm, true)] {
            std::fs::write(p, format!("{preamble}{}", confusion_csv(&m, normalized)))
                .with_context(|| format!("cannot write {}", p.display()))?;
        }
        println!("confusion -> {}", path.display());
    }
    Ok(())
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let runs: Vec<RunResults> = a
        .run
        .iter()
        .map(|dir| {
            let path = dir.join(RESULTS_FILE);
            require_file(&path, "run results")?;
            Ok(read_results(&path)?)
        })
        .collect::<Result<_>>()?;
    let out = match (&a.out, &a.run[..]) {
        (Some(o), _) => o.clone(),
        (None, [one]) => one.clone(),
        (None, _) => return Err(Invalid("--out is required when aggregating several runs".into()).into()),
    };
    let results = if runs.len() == 1 {
        runs.into_iter().next().unwrap()
    } else {
        aggregate_runs(&runs).map_err(|e| Invalid(e.to_string()))?
    };
    let mut files = vec![write_results(&out, &results)?];
    files.extend(write_report(&out, &results)?);
    write_manifest(&out, &results, &files)?;
    print!("{}", summary(&results));
    println!("report -> {}", out.display());
    Ok(())
}
