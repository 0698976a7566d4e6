//! Run results and their CSV/JSON artifacts.
//!
//! Every CSV starts with a `# config_hash=<hex> seed=<seeds>` comment line,
//! followed by a header row. Files written by [`write_report`]:
//!
//! | file | header |
//! |---|---|
//! | `accuracy_<regime>.csv` | `train,<test language>...` |
//! | `datasets_<regime>.csv` | `train,<dataset>...,mean` |
//! | `confusion_<regime>_<train>.csv` | `gold\predicted,<label>...` |
//! | `confusion_<regime>_<train>_norm.csv` | same, rows normalized |
//! | `importance_<regime>.csv` | `train,layer,score` |
//! | `layers_<regime>.csv` | `train,layer,group,accuracy,support` |
//!
//! Missing values are written as `N/A`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ConfusionMatrix, LayerPoint, LayerwiseResult, PartitionFilter, RegimeResult, Regime};
use crate::error::{Error, Result};
use crate::probe::TrainConfig;
use crate::repr::ReprLayout;

pub const RESULTS_FILE: &str = "results.json";

/// Everything that determines a run except the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub layout: ReprLayout,
    pub regimes: Vec<Regime>,
    pub layerwise: bool,
    pub train: TrainConfig,
    pub layerwise_train: TrainConfig,
    /// Hash of the label mapping table the representations were labelled with.
    pub mapping_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub settings: RunSettings,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub regimes: Vec<RegimeResult>,
    pub layerwise: Vec<LayerwiseResult>,
}

/// First 16 hex digits of SHA-256 over the settings JSON, with seeds zeroed
/// so that runs differing only in seed share a hash.
pub fn config_hash(settings: &RunSettings) -> String {
    let mut s = settings.clone();
    s.train.seed = 0;
    s.layerwise_train.seed = 0;
    let json = serde_json::to_string(&s).expect("settings serialize");
    let digest = Sha256::digest(json.as_bytes());
    hex::encode(&digest[..8])
}

pub fn write_results(dir: &Path, results: &RunResults) -> Result<PathBuf> {
    create_dir(dir)?;
    let path = dir.join(RESULTS_FILE);
    let text = serde_json::to_string_pretty(results)?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_results(path: &Path) -> Result<RunResults> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn seeds_str(seeds: &[u64]) -> String {
    seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| format!("{x:.6}"))
}

fn file_stem(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

struct CsvWriter<'a> {
    dir: &'a Path,
    preamble: String,
    written: Vec<PathBuf>,
}

impl CsvWriter<'_> {
    fn write(&mut self, name: &str, rows: Vec<Vec<String>>) -> Result<()> {
        let mut text = self.preamble.clone();
        for row in rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }
}

/// Unweighted mean of the present cells.
pub(crate) fn mean_present(cells: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = cells.iter().flatten().copied().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

/// Confusion matrix as CSV text (no comment line), counts or row-normalized.
pub fn confusion_csv(m: &ConfusionMatrix, normalized: bool) -> String {
    confusion_rows(m, normalized)
        .into_iter()
        .map(|row| row.join(",") + "\n")
        .collect()
}

fn confusion_rows(m: &ConfusionMatrix, normalized: bool) -> Vec<Vec<String>> {
    let mut rows = vec![std::iter::once("gold\\predicted".to_string())
        .chain(m.labels.iter().map(|l| l.to_string()))
        .collect()];
    let norm = m.row_normalized();
    for (i, label) in m.labels.iter().enumerate() {
        let mut row = vec![label.to_string()];
        if normalized {
            row.extend(norm[i].iter().map(|v| format!("{v:.6}")));
        } else {
            row.extend(m.counts[i].iter().map(u64::to_string));
        }
        rows.push(row);
    }
    rows
}

/// Writes the CSV tables for `results` into `dir` and returns their paths.
pub fn write_report(dir: &Path, results: &RunResults) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut w = CsvWriter {
        dir,
        preamble: format!(
            "# config_hash={} seed={}\n",
            results.config_hash,
            seeds_str(&results.seeds)
        ),
        written: Vec::new(),
    };
    for r in &results.regimes {
        let regime = r.regime.as_str();
        let mut rows = vec![std::iter::once("train".to_string())
            .chain(r.test_partitions.iter().cloned())
            .collect::<Vec<_>>()];
        for (train, accs) in r.train_partitions.iter().zip(&r.accuracy) {
            rows.push(
                std::iter::once(train.clone())
                    .chain(accs.iter().map(|&a| fmt_opt(a)))
                    .collect(),
            );
        }
        w.write(&format!("accuracy_{regime}.csv"), rows)?;

        let mut rows = vec![std::iter::once("train".to_string())
            .chain(r.datasets.iter().cloned())
            .chain(std::iter::once("mean".to_string()))
            .collect::<Vec<_>>()];
        for (train, accs) in r.train_partitions.iter().zip(&r.dataset_accuracy) {
            rows.push(
                std::iter::once(train.clone())
                    .chain(accs.iter().map(|&a| fmt_opt(a)))
                    .chain(std::iter::once(fmt_opt(mean_present(accs))))
                    .collect(),
            );
        }
        w.write(&format!("datasets_{regime}.csv"), rows)?;

        for (train, m) in r.train_partitions.iter().zip(&r.confusion) {
            let stem = format!("confusion_{regime}_{}", file_stem(train));
            w.write(&format!("{stem}.csv"), confusion_rows(m, false))?;
            w.write(&format!("{stem}_norm.csv"), confusion_rows(m, true))?;
        }

        let mut rows = vec![vec!["train".to_string(), "layer".into(), "score".into()]];
        for (train, scores) in r.train_partitions.iter().zip(&r.importance) {
            for (layer, s) in scores.iter().enumerate() {
                rows.push(vec![train.clone(), layer.to_string(), format!("{s:.6}")]);
            }
        }
        w.write(&format!("importance_{regime}.csv"), rows)?;
    }
    for lw in &results.layerwise {
        let mut rows = vec![vec![
            "train".to_string(),
            "layer".into(),
            "group".into(),
            "accuracy".into(),
            "support".into(),
        ]];
        for p in &lw.points {
            rows.push(vec![
                p.train.clone(),
                p.layer.to_string(),
                p.group.clone(),
                fmt_opt(p.accuracy),
                p.support.to_string(),
            ]);
        }
        w.write(&format!("layers_{}.csv", lw.regime.as_str()), rows)?;
    }
    Ok(w.written)
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_hash: &'a str,
    seeds: &'a [u64],
    settings: &'a RunSettings,
    partitions: BTreeMap<String, Vec<String>>,
    files: Vec<String>,
}

/// `manifest.json`: settings, seeds, mapping hash, partition definitions and
/// the files of the run.
pub fn write_manifest(dir: &Path, results: &RunResults, files: &[PathBuf]) -> Result<PathBuf> {
    let partitions = results
        .regimes
        .iter()
        .map(|r| {
            let defs = r
                .train_partitions
                .iter()
                .map(|name| partition_definition(r.regime, name))
                .collect();
            (r.regime.as_str().to_string(), defs)
        })
        .collect();
    let manifest = Manifest {
        config_hash: &results.config_hash,
        seeds: &results.seeds,
        settings: &results.settings,
        partitions,
        files: files
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn partition_definition(regime: Regime, name: &str) -> String {
    let filter = match regime {
        Regime::Mono => PartitionFilter::Language(name.into()),
        Regime::MultiLang => PartitionFilter::Family(name.into()),
        Regime::MultiAll => PartitionFilter::All,
    };
    filter.to_string()
}

fn mean_cells(grids: &[&Vec<Vec<Option<f64>>>]) -> Vec<Vec<Option<f64>>> {
    let first = grids[0];
    first
        .iter()
        .enumerate()
        .map(|(i, row)| {
            (0..row.len())
                .map(|j| {
                    let cells: Vec<Option<f64>> = grids.iter().map(|g| g[i][j]).collect();
                    mean_present(&cells)
                })
                .collect()
        })
        .collect()
}

/// Combines runs of the same configuration under different seeds: accuracies
/// and importance scores are averaged, confusion counts summed.
pub fn aggregate_runs(runs: &[RunResults]) -> Result<RunResults> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Experiment("no runs to aggregate".into()))?;
    let mismatch = |what: &str| Error::Experiment(format!("runs differ in {what}; cannot aggregate"));
    for r in runs {
        if r.config_hash != first.config_hash {
            return Err(mismatch("configuration"));
        }
        if r.regimes.len() != first.regimes.len() || r.layerwise.len() != first.layerwise.len() {
            return Err(mismatch("regimes"));
        }
    }
    let mut seeds: Vec<u64> = runs.iter().flat_map(|r| r.seeds.iter().copied()).collect();
    seeds.sort();
    seeds.dedup();

    let mut regimes = Vec::new();
    for (k, base) in first.regimes.iter().enumerate() {
        let all: Vec<&RegimeResult> = runs.iter().map(|r| &r.regimes[k]).collect();
        if all.iter().any(|r| {
            r.regime != base.regime
                || r.train_partitions != base.train_partitions
                || r.test_partitions != base.test_partitions
                || r.datasets != base.datasets
        }) {
            return Err(mismatch("partitions"));
        }
        let mut confusion = base.confusion.clone();
        for r in &all[1..] {
            for (c, o) in confusion.iter_mut().zip(&r.confusion) {
                c.add(o)?;
            }
        }
        let importance = base
            .importance
            .iter()
            .enumerate()
            .map(|(i, v)| {
                (0..v.len())
                    .map(|l| all.iter().map(|r| r.importance[i][l]).sum::<f64>() / all.len() as f64)
                    .collect()
            })
            .collect();
        regimes.push(RegimeResult {
            regime: base.regime,
            train_partitions: base.train_partitions.clone(),
            test_partitions: base.test_partitions.clone(),
            skipped: base.skipped.clone(),
            accuracy: mean_cells(&all.iter().map(|r| &r.accuracy).collect::<Vec<_>>()),
            datasets: base.datasets.clone(),
            dataset_accuracy: mean_cells(&all.iter().map(|r| &r.dataset_accuracy).collect::<Vec<_>>()),
            confusion,
            importance,
        });
    }

    let mut layerwise = Vec::new();
    for (k, base) in first.layerwise.iter().enumerate() {
        let all: Vec<&LayerwiseResult> = runs.iter().map(|r| &r.layerwise[k]).collect();
        if all.iter().any(|r| r.points.len() != base.points.len()) {
            return Err(mismatch("layer curves"));
        }
        let points = base
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let cells: Vec<Option<f64>> = all.iter().map(|r| r.points[i].accuracy).collect();
                LayerPoint {
                    accuracy: mean_present(&cells),
                    ..p.clone()
                }
            })
            .collect();
        layerwise.push(LayerwiseResult {
            regime: base.regime,
            layers: base.layers,
            points,
        });
    }

    Ok(RunResults {
        settings: first.settings.clone(),
        config_hash: first.config_hash.clone(),
        seeds,
        regimes,
        layerwise,
    })
}

/// Text summary used by the CLI.
pub fn summary(results: &RunResults) -> String {
    let mut s = String::new();
    for r in &results.regimes {
        let _ = writeln!(s, "{}:", r.regime);
        for (train, accs) in r.train_partitions.iter().zip(&r.accuracy) {
            let _ = writeln!(s, "  {train}: mean test-language accuracy {}", fmt_opt(mean_present(accs)));
        }
        if !r.skipped.is_empty() {
            let _ = writeln!(s, "  skipped: {}", r.skipped.join(", "));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_present_ignores_missing() {
        assert_eq!(mean_present(&[Some(0.5), None, Some(1.0)]), Some(0.75));
        assert_eq!(mean_present(&[None]), None);
    }

    #[test]
    fn file_stems_are_safe() {
        assert_eq!(file_stem("Indo-European"), "Indo-European");
        assert_eq!(file_stem("a b/c"), "a_b_c");
    }
}
