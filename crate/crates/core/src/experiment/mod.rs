//! Experiment grids over training partitions, layers and relation classes.

mod metrics;
mod report;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disrpt::Split;
use crate::error::{Error, Result};
use crate::labels::{top_level, TopLevelClass, UnifiedLabel};
use crate::probe::{evaluate, train, ProbeInput, ProbeModel, TrainConfig, TrainingLog};
use crate::repr::{layer_slice_values, ReprStore};

pub use metrics::{layer_importance, ConfusionMatrix};
pub use report::{
    aggregate_runs, config_hash, confusion_csv, read_results, summary, write_manifest, write_report, write_results,
    RunResults, RunSettings, RESULTS_FILE,
};

/// Language families by ISO 639-3 code. Indo-European is the union of the
/// four subfamilies above it.
pub const FAMILIES: &[(&str, &[&str])] = &[
    ("Germanic", &["deu", "eng", "nld"]),
    ("Romance", &["fra", "ita", "por", "spa"]),
    ("Slavic", &["rus"]),
    ("Iranian", &["fas"]),
    (
        "Indo-European",
        &["deu", "eng", "nld", "fra", "ita", "por", "spa", "rus", "fas"],
    ),
    ("Isolate", &["eus"]),
    ("Tai-Kadai", &["tha"]),
    ("Turkic", &["tur"]),
    ("Sino-Tibetan", &["zho"]),
];

/// Most specific family of a language, if it is one of the 13 benchmark
/// languages.
pub fn language_family(lang: &str) -> Option<&'static str> {
    FAMILIES
        .iter()
        .find(|(_, members)| members.contains(&lang))
        .map(|(name, _)| *name)
}

pub fn family_members(name: &str) -> Option<&'static [&'static str]> {
    FAMILIES.iter().find(|(n, _)| *n == name).map(|(_, m)| *m)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum PartitionFilter {
    All,
    Dataset(String),
    Language(String),
    Family(String),
}

impl PartitionFilter {
    pub fn matches(&self, dataset: &crate::disrpt::DatasetId) -> bool {
        match self {
            PartitionFilter::All => true,
            PartitionFilter::Dataset(d) => dataset.to_string() == *d,
            PartitionFilter::Language(l) => dataset.language == *l,
            PartitionFilter::Family(f) => {
                family_members(f).is_some_and(|m| m.contains(&dataset.language.as_str()))
            }
        }
    }

    /// Short column name: `all`, the dataset id, the language code or the
    /// family name.
    pub fn name(&self) -> String {
        match self {
            PartitionFilter::All => "all".into(),
            PartitionFilter::Dataset(s) | PartitionFilter::Language(s) | PartitionFilter::Family(s) => s.clone(),
        }
    }
}

impl fmt::Display for PartitionFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionFilter::All => f.write_str("all"),
            PartitionFilter::Dataset(d) => write!(f, "dataset:{d}"),
            PartitionFilter::Language(l) => write!(f, "language:{l}"),
            PartitionFilter::Family(n) => write!(f, "family:{n}"),
        }
    }
}

impl FromStr for PartitionFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Experiment(format!(
            "invalid partition {s:?}: expected all, dataset:<id>, language:<iso> or family:<name>"
        ));
        if s == "all" {
            return Ok(PartitionFilter::All);
        }
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        if value.is_empty() {
            return Err(bad());
        }
        match kind {
            "dataset" => {
                value.parse::<crate::disrpt::DatasetId>()?;
                Ok(PartitionFilter::Dataset(value.into()))
            }
            "language" => Ok(PartitionFilter::Language(value.into())),
            "family" => {
                if family_members(value).is_none() {
                    let known: Vec<&str> = FAMILIES.iter().map(|(n, _)| *n).collect();
                    return Err(Error::Experiment(format!(
                        "unknown family {value:?}; known: {}",
                        known.join(", ")
                    )));
                }
                Ok(PartitionFilter::Family(value.into()))
            }
            _ => Err(bad()),
        }
    }
}

impl From<PartitionFilter> for String {
    fn from(p: PartitionFilter) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for PartitionFilter {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "mono")]
    Mono,
    #[serde(rename = "multi-lang")]
    MultiLang,
    #[serde(rename = "multi-all")]
    MultiAll,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Mono, Regime::MultiLang, Regime::MultiAll];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Mono => "mono",
            Regime::MultiLang => "multi-lang",
            Regime::MultiAll => "multi-all",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Experiment(format!(
                "invalid regime {s:?}: expected mono, multi-lang or multi-all"
            )))
    }
}

/// Indices of labelled records in `split` matching `filter`, in store order.
pub fn select_rows(store: &ReprStore, split: Split, filter: &PartitionFilter) -> Vec<usize> {
    store
        .meta
        .iter()
        .enumerate()
        .filter(|(_, m)| m.split == split && m.unified_label.is_some() && filter.matches(&m.dataset))
        .map(|(i, _)| i)
        .collect()
}

/// Feature matrix for `rows`, restricted to one layer if given.
pub fn feature_matrix(store: &ReprStore, rows: &[usize], layer: Option<usize>) -> Result<Array2<f32>> {
    let width = match layer {
        Some(_) => store.layout.layer_width(),
        None => store.layout.width(),
    };
    let mut data = Vec::with_capacity(rows.len() * width);
    for &i in rows {
        let values = &store.records[i].values;
        match layer {
            Some(l) => data.extend(layer_slice_values(&store.layout, values, l)?),
            None => data.extend_from_slice(values),
        }
    }
    Ok(Array2::from_shape_vec((rows.len(), width), data).unwrap())
}

fn labels_of(store: &ReprStore, rows: &[usize]) -> Vec<UnifiedLabel> {
    rows.iter()
        .map(|&i| store.meta[i].unified_label.expect("selected rows are labelled"))
        .collect()
}

fn datasets_of(store: &ReprStore, rows: &[usize]) -> Vec<String> {
    rows.iter().map(|&i| store.meta[i].dataset.to_string()).collect()
}

/// Languages with labelled records in `split`, sorted.
pub fn languages(store: &ReprStore, split: Split) -> Vec<String> {
    let set: BTreeSet<&str> = store
        .meta
        .iter()
        .filter(|m| m.split == split && m.unified_label.is_some())
        .map(|m| m.dataset.language.as_str())
        .collect();
    set.into_iter().map(String::from).collect()
}

/// Training partitions of a regime, plus training languages that no
/// partition covers.
pub fn training_partitions(store: &ReprStore, regime: Regime) -> Result<(Vec<PartitionFilter>, Vec<String>)> {
    let langs = languages(store, Split::Train);
    if langs.is_empty() {
        return Err(Error::Experiment("no labelled training instances".into()));
    }
    match regime {
        Regime::Mono => Ok((
            langs.iter().cloned().map(PartitionFilter::Language).collect(),
            Vec::new(),
        )),
        Regime::MultiAll => Ok((vec![PartitionFilter::All], Vec::new())),
        Regime::MultiLang => {
            let mut parts = Vec::new();
            let mut covered = BTreeSet::new();
            for (name, members) in FAMILIES {
                let present: Vec<&String> = langs.iter().filter(|l| members.contains(&l.as_str())).collect();
                if present.len() >= 2 {
                    parts.push(PartitionFilter::Family(name.to_string()));
                    covered.extend(present);
                }
            }
            if parts.is_empty() {
                return Err(Error::Experiment("family regime requires ≥2 languages".into()));
            }
            let skipped = langs.iter().filter(|l| !covered.contains(l)).cloned().collect();
            Ok((parts, skipped))
        }
    }
}

/// A probe trained on one partition.
#[derive(Debug, Clone)]
pub struct TrainedProbe {
    pub partition: PartitionFilter,
    pub model: ProbeModel<f32>,
    pub log: TrainingLog,
}

/// Train × test accuracy grid and per-probe diagnostics for one regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeResult {
    pub regime: Regime,
    pub train_partitions: Vec<String>,
    pub test_partitions: Vec<String>,
    /// Training languages not covered by any partition.
    pub skipped: Vec<String>,
    /// `[train][test]` accuracy; `None` if the test partition is empty.
    pub accuracy: Vec<Vec<Option<f64>>>,
    pub datasets: Vec<String>,
    /// `[train][dataset]` accuracy over the test split.
    pub dataset_accuracy: Vec<Vec<Option<f64>>>,
    /// Per training partition, over the whole test split.
    pub confusion: Vec<ConfusionMatrix>,
    /// Per training partition, one score per layer.
    pub importance: Vec<Vec<f64>>,
}

fn train_partition(
    store: &ReprStore,
    filter: &PartitionFilter,
    layer: Option<usize>,
    cfg: &TrainConfig,
) -> Result<TrainedProbe> {
    let rows = select_rows(store, Split::Train, filter);
    if rows.is_empty() {
        return Err(Error::Experiment(format!("training partition {filter} is empty")));
    }
    let x = feature_matrix(store, &rows, layer)?;
    let y = labels_of(store, &rows);
    let input = ProbeInput {
        layers: store.layout.layers,
        heads: store.layout.heads,
        pooling: store.layout.pooling,
        layer,
    };
    let (model, log) = train(x.view(), &y, input, cfg, None)
        .map_err(|e| Error::Training(format!("partition {filter}: {e}")))?;
    Ok(TrainedProbe {
        partition: filter.clone(),
        model,
        log,
    })
}

/// Test rows grouped by language, plus the full labelled test split.
struct TestSet {
    rows: Vec<usize>,
    gold: Vec<UnifiedLabel>,
    datasets: Vec<String>,
    languages: Vec<String>,
    /// Positions into `rows` per language.
    by_language: Vec<Vec<usize>>,
}

impl TestSet {
    fn new(store: &ReprStore) -> Self {
        let rows = select_rows(store, Split::Test, &PartitionFilter::All);
        let gold = labels_of(store, &rows);
        let datasets = datasets_of(store, &rows);
        let languages = languages(store, Split::Test);
        let by_language = languages
            .iter()
            .map(|l| {
                rows.iter()
                    .enumerate()
                    .filter(|(_, &i)| store.meta[i].dataset.language == *l)
                    .map(|(p, _)| p)
                    .collect()
            })
            .collect();
        TestSet {
            rows,
            gold,
            datasets,
            languages,
            by_language,
        }
    }
}

fn accuracy_at(pred: &[UnifiedLabel], gold: &[UnifiedLabel], positions: impl Iterator<Item = usize>) -> Option<f64> {
    let (mut n, mut correct) = (0usize, 0usize);
    for p in positions {
        n += 1;
        if pred[p] == gold[p] {
            correct += 1;
        }
    }
    (n > 0).then(|| correct as f64 / n as f64)
}

/// Trains one probe per partition of `regime` and evaluates each on every
/// test language.
pub fn run_regime(store: &ReprStore, regime: Regime, cfg: &TrainConfig) -> Result<(RegimeResult, Vec<TrainedProbe>)> {
    let (partitions, skipped) = training_partitions(store, regime)?;
    for lang in &skipped {
        log::warn!("{regime}: language {lang} has no family partner and is skipped");
    }
    let test = TestSet::new(store);
    let test_x = feature_matrix(store, &test.rows, None)?;

    let probes: Vec<TrainedProbe> = partitions
        .par_iter()
        .map(|p| train_partition(store, p, None, cfg))
        .collect::<Result<_>>()?;

    let mut datasets: Vec<String> = test.datasets.clone();
    datasets.sort();
    datasets.dedup();

    let mut result = RegimeResult {
        regime,
        train_partitions: partitions.iter().map(|p| p.name()).collect(),
        test_partitions: test.languages.clone(),
        skipped,
        accuracy: Vec::new(),
        datasets: datasets.clone(),
        dataset_accuracy: Vec::new(),
        confusion: Vec::new(),
        importance: Vec::new(),
    };
    for probe in &probes {
        if test.rows.is_empty() {
            result.accuracy.push(vec![None; test.languages.len()]);
            result.dataset_accuracy.push(vec![None; datasets.len()]);
            result.confusion.push(ConfusionMatrix::from_predictions(&probe.model.classes, &[], &[]));
        } else {
            let eval = evaluate(&probe.model, test_x.view(), &test.gold, &test.datasets)?;
            result.accuracy.push(
                test.by_language
                    .iter()
                    .map(|pos| accuracy_at(&eval.predictions, &test.gold, pos.iter().copied()))
                    .collect(),
            );
            result.dataset_accuracy.push(
                datasets
                    .iter()
                    .map(|d| eval.per_dataset.get(d).map(|s| s.accuracy))
                    .collect(),
            );
            result.confusion.push(ConfusionMatrix::from_predictions(
                &probe.model.classes,
                &test.gold,
                &eval.predictions,
            ));
        }
        result.importance.push(layer_importance(&probe.model, &store.layout)?);
    }
    Ok((result, probes))
}

/// One point of a layer curve: accuracy of the layer-`layer` probe trained on
/// `train` over the test instances in `group`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPoint {
    pub train: String,
    pub layer: usize,
    /// `all`, `language:<iso>`, `family:<name>`, `label:<label>` or
    /// `class:<top-level class>`.
    pub group: String,
    /// `None` when the group has no test instances.
    pub accuracy: Option<f64>,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerwiseResult {
    pub regime: Regime,
    pub layers: usize,
    pub points: Vec<LayerPoint>,
}

/// Trains one probe per (training partition, layer) and reports accuracy by
/// layer for every language, family, unified label and top-level class.
pub fn run_layerwise(store: &ReprStore, regime: Regime, cfg: &TrainConfig) -> Result<LayerwiseResult> {
    let (partitions, _) = training_partitions(store, regime)?;
    let layers = store.layout.layers;
    let test = TestSet::new(store);

    let mut groups: Vec<(String, Vec<usize>)> = vec![("all".into(), (0..test.rows.len()).collect())];
    for (lang, pos) in test.languages.iter().zip(&test.by_language) {
        groups.push((format!("language:{lang}"), pos.clone()));
    }
    for (name, members) in FAMILIES {
        let pos: Vec<usize> = (0..test.rows.len())
            .filter(|&p| members.contains(&store.meta[test.rows[p]].dataset.language.as_str()))
            .collect();
        if !pos.is_empty() {
            groups.push((format!("family:{name}"), pos));
        }
    }
    for label in UnifiedLabel::ALL {
        let pos = (0..test.gold.len()).filter(|&p| test.gold[p] == label).collect();
        groups.push((format!("label:{label}"), pos));
    }
    for class in TopLevelClass::ALL {
        let pos = (0..test.gold.len()).filter(|&p| top_level(test.gold[p]) == class).collect();
        groups.push((format!("class:{}", class.as_str()), pos));
    }

    let jobs: Vec<(usize, usize)> = (0..partitions.len())
        .flat_map(|p| (0..layers).map(move |l| (p, l)))
        .collect();
    let points: Vec<Vec<LayerPoint>> = jobs
        .par_iter()
        .map(|&(p, layer)| -> Result<Vec<LayerPoint>> {
            let probe = train_partition(store, &partitions[p], Some(layer), cfg)?;
            let pred = if test.rows.is_empty() {
                Vec::new()
            } else {
                let x = feature_matrix(store, &test.rows, Some(layer))?;
                evaluate(&probe.model, x.view(), &test.gold, &test.datasets)?.predictions
            };
            Ok(groups
                .iter()
                .map(|(group, pos)| LayerPoint {
                    train: partitions[p].name(),
                    layer,
                    group: group.clone(),
                    accuracy: accuracy_at(&pred, &test.gold, pos.iter().copied()),
                    support: pos.len(),
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(LayerwiseResult {
        regime,
        layers,
        points: points.into_iter().flatten().collect(),
    })
}
