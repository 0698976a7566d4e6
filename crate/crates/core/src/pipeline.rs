//! End-to-end glue: relations → representation store → trained probes and
//! report files.

use std::path::{Path, PathBuf};

use crate::disrpt::{Document, RelationInstance};
use crate::error::{Error, Result};
use crate::experiment::{
    config_hash, run_layerwise, run_regime, write_manifest, write_report, write_results, RunResults,
    RunSettings, TrainedProbe,
};
use crate::probe::write_checkpoint;
use crate::repr::{
    encode_relations, AttentionSource, EncodeStats, PoolingConfig, RecordMeta, ReprRecord, ReprStore,
    WindowPolicy,
};

/// Encodes `relations` into a store whose record ordinals are their indices.
pub fn build_store(
    documents: &[Document],
    relations: &[RelationInstance],
    source: &dyn AttentionSource,
    policy: WindowPolicy,
    pooling: PoolingConfig,
) -> Result<(ReprStore, EncodeStats)> {
    if relations.is_empty() {
        return Err(Error::Corpus("no relations to encode".into()));
    }
    let (reprs, stats) = encode_relations(documents, relations, source, policy, pooling)?;
    let layout = reprs[0].layout;
    let mut records = Vec::with_capacity(reprs.len());
    let mut meta = Vec::with_capacity(reprs.len());
    for (i, (r, rel)) in reprs.into_iter().zip(relations).enumerate() {
        records.push(ReprRecord {
            ordinal: i as u64,
            source: r.source,
            values: r.values,
        });
        meta.push(RecordMeta {
            ordinal: i as u64,
            dataset: rel.dataset.clone(),
            doc_id: rel.doc_id.clone(),
            split: rel.split,
            unified_label: rel.unified_label,
            original_label: rel.original_label.clone(),
        });
    }
    Ok((ReprStore { layout, records, meta }, stats))
}

/// Probes of a run, grouped by regime; layer-wise probes are not kept.
pub type RunProbes = Vec<(crate::experiment::Regime, Vec<TrainedProbe>)>;

/// Runs every configured regime (and layer-wise grid) with one seed.
pub fn run_experiment(store: &ReprStore, settings: &RunSettings, seed: u64) -> Result<(RunResults, RunProbes)> {
    if settings.layout != store.layout {
        return Err(Error::Experiment(format!(
            "settings describe layout {:?} but the store has {:?}",
            settings.layout, store.layout
        )));
    }
    let mut train_cfg = settings.train.clone();
    train_cfg.seed = seed;
    let mut layer_cfg = settings.layerwise_train.clone();
    layer_cfg.seed = seed;

    let mut regimes = Vec::new();
    let mut probes = Vec::new();
    let mut layerwise = Vec::new();
    for &regime in &settings.regimes {
        let (result, trained) = run_regime(store, regime, &train_cfg)?;
        regimes.push(result);
        probes.push((regime, trained));
        if settings.layerwise {
            layerwise.push(run_layerwise(store, regime, &layer_cfg)?);
        }
    }
    let results = RunResults {
        config_hash: config_hash(settings),
        settings: settings.clone(),
        seeds: vec![seed],
        regimes,
        layerwise,
    };
    Ok((results, probes))
}

/// `probes/<regime>_<partition>.prbm` under the run directory.
pub fn probe_path(dir: &Path, regime: crate::experiment::Regime, partition: &str) -> PathBuf {
    let name: String = partition
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    dir.join("probes").join(format!("{}_{name}.prbm", regime.as_str()))
}

/// Writes results JSON, checkpoints, CSV tables and the manifest.
pub fn write_run(dir: &Path, results: &RunResults, probes: &RunProbes) -> Result<Vec<PathBuf>> {
    let mut files = vec![write_results(dir, results)?];
    let probe_dir = dir.join("probes");
    std::fs::create_dir_all(&probe_dir).map_err(|e| Error::io(&probe_dir, e))?;
    for (regime, trained) in probes {
        for p in trained {
            let path = probe_path(dir, *regime, &p.partition.name());
            write_checkpoint(&path, &p.model, Some(&p.log))?;
        }
    }
    files.extend(write_report(dir, results)?);
    let manifest = write_manifest(dir, results, &files)?;
    files.push(manifest);
    Ok(files)
}
