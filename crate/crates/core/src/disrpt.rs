//! Reading DISRPT-style relation corpora.
//!
//! A corpus directory holds `<dataset>_<split>.rels` files (one TSV per split)
//! and optionally `<dataset>_<split>.tok` / `.conllu` token sources. Columns are
//! located by header name through [`COLUMN_ALIASES`], so minor format drift between
//! shared-task editions does not break ingestion.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::UnifiedLabel;

/// Token placed at document positions no token source covers.
pub const PLACEHOLDER_TOKEN: &str = "_";

/// Header aliases per logical column, in preference order.
///
/// The original label prefers DISRPT's harmonized `label` column and falls
/// back to the raw `orig_label`.
pub const COLUMN_ALIASES: &[(Column, &[&str])] = &[
    (Column::DocId, &["doc", "doc_id", "document"]),
    (Column::Unit1Toks, &["unit1_toks", "unit1_tokens", "arg1_toks"]),
    (Column::Unit2Toks, &["unit2_toks", "unit2_tokens", "arg2_toks"]),
    (Column::Unit1Text, &["unit1_txt", "unit1_text", "arg1_txt"]),
    (Column::Unit2Text, &["unit2_txt", "unit2_text", "arg2_txt"]),
    (Column::Direction, &["dir", "direction"]),
    (Column::Label, &["label", "orig_label", "relation", "rel", "sense"]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Column {
    DocId,
    Unit1Toks,
    Unit2Toks,
    Unit1Text,
    Unit2Text,
    Direction,
    Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Framework {
    Rst,
    Pdtb,
    Sdrt,
    Dep,
}

impl Framework {
    pub const ALL: [Framework; 4] = [
        Framework::Rst,
        Framework::Pdtb,
        Framework::Sdrt,
        Framework::Dep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Framework::Rst => "rst",
            Framework::Pdtb => "pdtb",
            Framework::Sdrt => "sdrt",
            Framework::Dep => "dep",
        }
    }
}

impl FromStr for Framework {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        Framework::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or(())
    }
}

impl fmt::Display for Framework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `lang.framework.corpus`, e.g. `eng.rst.gum`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DatasetId {
    pub language: String,
    pub framework: Framework,
    pub corpus: String,
}

impl DatasetId {
    pub fn new(language: &str, framework: Framework, corpus: &str) -> Result<Self> {
        format!("{language}.{framework}.{corpus}").parse()
    }
}

fn valid_segment(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '-')
}

impl FromStr for DatasetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('.').collect();
        let [language, framework, corpus] = parts[..] else {
            return Err(Error::DatasetId(s.to_string()));
        };
        if !valid_segment(language) || !valid_segment(corpus) {
            return Err(Error::DatasetId(s.to_string()));
        }
        let framework = framework
            .parse()
            .map_err(|_| Error::DatasetId(s.to_string()))?;
        Ok(DatasetId {
            language: language.to_string(),
            framework,
            corpus: corpus.to_string(),
        })
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.language, self.framework, self.corpus)
    }
}

impl Serialize for DatasetId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DatasetId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Inclusive, 1-based token ranges over a document, sorted and disjoint.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSpanSet {
    ranges: Vec<(usize, usize)>,
}

impl TokenSpanSet {
    /// Builds a span set from inclusive ranges, sorting them and rejecting
    /// overlaps, reversed ranges and zero indices.
    pub fn from_ranges(mut ranges: Vec<(usize, usize)>) -> std::result::Result<Self, String> {
        if ranges.is_empty() {
            return Err("empty span".into());
        }
        for &(a, b) in &ranges {
            if a == 0 || b == 0 {
                return Err("token indices are 1-based".into());
            }
            if a > b {
                return Err(format!("reversed range {a}-{b}"));
            }
        }
        ranges.sort_unstable();
        for w in ranges.windows(2) {
            if w[1].0 <= w[0].1 {
                return Err(format!(
                    "overlapping ranges {}-{} and {}-{}",
                    w[0].0, w[0].1, w[1].0, w[1].1
                ));
            }
        }
        Ok(TokenSpanSet { ranges })
    }

    pub fn ranges(&self) -> &[(usize, usize)] {
        &self.ranges
    }

    pub fn min(&self) -> usize {
        self.ranges[0].0
    }

    pub fn max(&self) -> usize {
        self.ranges[self.ranges.len() - 1].1
    }

    pub fn len(&self) -> usize {
        self.ranges.iter().map(|(a, b)| b - a + 1).sum()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// All covered indices in ascending order (1-based).
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.ranges.iter().flat_map(|&(a, b)| a..=b)
    }

    pub fn overlaps(&self, other: &TokenSpanSet) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.ranges.len() && j < other.ranges.len() {
            let (a0, a1) = self.ranges[i];
            let (b0, b1) = other.ranges[j];
            if a0 <= b1 && b0 <= a1 {
                return true;
            }
            if a1 < b1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        false
    }
}

impl FromStr for TokenSpanSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_token_spans(s)
    }
}

impl fmt::Display for TokenSpanSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, &(a, b)) in self.ranges.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            if a == b {
                write!(f, "{a}")?;
            } else {
                write!(f, "{a}-{b}")?;
            }
        }
        Ok(())
    }
}

impl Serialize for TokenSpanSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TokenSpanSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_token_spans(&s).map_err(serde::de::Error::custom)
    }
}

/// Parses `a` / `a-b` items separated by commas, e.g. `"5-9,14"`.
pub fn parse_token_spans(text: &str) -> Result<TokenSpanSet> {
    let err = |reason: String| Error::Span {
        text: text.to_string(),
        reason,
    };
    let text_trim = text.trim();
    if text_trim.is_empty() {
        return Err(err("empty span".into()));
    }
    let parse_index = |s: &str| -> Result<usize> {
        s.trim()
            .parse::<usize>()
            .map_err(|_| err(format!("not a token index: {s:?}")))
    };
    let mut ranges = Vec::new();
    for item in text_trim.split(',') {
        let range = match item.split_once('-') {
            Some((a, b)) => (parse_index(a)?, parse_index(b)?),
            None => {
                let a = parse_index(item)?;
                (a, a)
            }
        };
        ranges.push(range);
    }
    TokenSpanSet::from_ranges(ranges).map_err(err)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "1>2")]
    LeftToRight,
    #[serde(rename = "1<2")]
    RightToLeft,
    /// `_`: some corpora leave the direction blank (e.g. multinuclear relations).
    #[serde(rename = "_")]
    Unspecified,
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "1>2" => Ok(Direction::LeftToRight),
            "1<2" => Ok(Direction::RightToLeft),
            "_" => Ok(Direction::Unspecified),
            other => Err(format!("invalid direction {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Split::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("invalid split {s:?} (train|dev|test)"))
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationInstance {
    pub dataset: DatasetId,
    pub doc_id: String,
    pub unit1: TokenSpanSet,
    pub unit2: TokenSpanSet,
    pub unit1_text: String,
    pub unit2_text: String,
    pub direction: Direction,
    pub original_label: String,
    pub unified_label: Option<UnifiedLabel>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub dataset: DatasetId,
}

impl Document {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn resolve_columns(header: &[&str]) -> std::result::Result<BTreeMap<usize, Column>, String> {
    let lower: Vec<String> = header.iter().map(|h| h.trim().to_lowercase()).collect();
    let mut found = BTreeMap::new();
    for (column, aliases) in COLUMN_ALIASES {
        let idx = aliases
            .iter()
            .find_map(|alias| lower.iter().position(|h| h == alias))
            .ok_or_else(|| {
                format!(
                    "missing column {:?} (accepted headers: {})",
                    column,
                    aliases.join(", ")
                )
            })?;
        found.insert(idx, *column);
    }
    Ok(found)
}

/// Parses the text of a `.rels` file. `origin` is only used in error messages.
pub fn parse_rels_str(
    text: &str,
    origin: &Path,
    dataset: &DatasetId,
    split: Split,
) -> Result<Vec<RelationInstance>> {
    let mut lines = text.lines().enumerate();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let (_, header_line) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| parse_err(1, "missing header row".into()))?;
    let header: Vec<&str> = header_line.trim_end_matches('\r').split('\t').collect();
    let columns = resolve_columns(&header).map_err(|m| parse_err(1, m))?;
    let width = header.len();

    let mut out = Vec::new();
    for (i, raw) in lines {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != width {
            return Err(parse_err(
                line_no,
                format!("expected {width} columns, found {}", fields.len()),
            ));
        }
        let get = |c: Column| -> &str {
            let idx = columns.iter().find(|(_, col)| **col == c).map(|(i, _)| *i);
            fields[idx.expect("resolved column")]
        };
        let spans = |c: Column| -> Result<TokenSpanSet> {
            parse_token_spans(get(c)).map_err(|e| match e {
                Error::Span { reason, .. } if reason.starts_with("reversed") => {
                    parse_err(line_no, format!("reversed range at line {line_no}"))
                }
                Error::Span { text, reason } => {
                    parse_err(line_no, format!("invalid span {text:?}: {reason}"))
                }
                other => other,
            })
        };
        let unit1 = spans(Column::Unit1Toks)?;
        let unit2 = spans(Column::Unit2Toks)?;
        let direction = get(Column::Direction)
            .parse()
            .map_err(|m| parse_err(line_no, m))?;
        let label = get(Column::Label).trim();
        if label.is_empty() {
            return Err(parse_err(line_no, "empty label".into()));
        }
        let doc_id = get(Column::DocId).trim();
        if doc_id.is_empty() {
            return Err(parse_err(line_no, "empty document id".into()));
        }
        out.push(RelationInstance {
            dataset: dataset.clone(),
            doc_id: doc_id.to_string(),
            unit1,
            unit2,
            unit1_text: get(Column::Unit1Text).to_string(),
            unit2_text: get(Column::Unit2Text).to_string(),
            direction,
            original_label: label.to_string(),
            unified_label: None,
            split,
        });
    }
    Ok(out)
}

pub fn parse_rels_file(
    path: &Path,
    dataset: &DatasetId,
    split: Split,
) -> Result<Vec<RelationInstance>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rels_str(&text, path, dataset, split)
}

/// Parses a `.tok` or `.conllu` token source into per-document token lists.
///
/// Documents start at `# newdoc id = ...`; only integer token ids are kept
/// (multiword ranges `3-4` and empty nodes `3.1` are skipped), and indices
/// run continuously across sentence boundaries.
pub fn parse_token_source(text: &str) -> Vec<(String, Vec<String>)> {
    let mut docs: Vec<(String, Vec<String>)> = Vec::new();
    for line in text.lines() {
        let line = line.trim_end_matches('\r');
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((key, value)) = rest.split_once('=') {
                if key.trim() == "newdoc id" {
                    docs.push((value.trim().to_string(), Vec::new()));
                }
            }
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(id), Some(form)) = (cols.next(), cols.next()) else {
            continue;
        };
        if id.parse::<usize>().is_err() {
            continue;
        }
        if docs.is_empty() {
            docs.push((String::new(), Vec::new()));
        }
        docs.last_mut().unwrap().1.push(form.to_string());
    }
    docs
}

/// One dataset with its three splits and reconstructed documents.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub dataset: DatasetId,
    pub train: Vec<RelationInstance>,
    pub dev: Vec<RelationInstance>,
    pub test: Vec<RelationInstance>,
    pub documents: BTreeMap<String, Document>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.dev + self.test
    }
}

impl Corpus {
    pub fn split(&self, split: Split) -> &[RelationInstance] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, split: Split) -> &mut Vec<RelationInstance> {
        match split {
            Split::Train => &mut self.train,
            Split::Dev => &mut self.dev,
            Split::Test => &mut self.test,
        }
    }

    pub fn counts(&self) -> SplitCounts {
        SplitCounts {
            train: self.train.len(),
            dev: self.dev.len(),
            test: self.test.len(),
        }
    }

    pub fn relations(&self) -> impl Iterator<Item = &RelationInstance> {
        self.train.iter().chain(&self.dev).chain(&self.test)
    }
}

fn dataset_dir(root: &Path, dataset: &DatasetId) -> PathBuf {
    let nested = root.join(dataset.to_string());
    if nested.is_dir() {
        nested
    } else {
        root.to_path_buf()
    }
}

/// Loads all splits of `dataset` from `root` (or `root/<dataset>/`).
///
/// A missing split file logs a warning and yields an empty split. Documents
/// come from `.tok`/`.conllu` files when present; otherwise they are
/// synthesized from the unit texts, with [`PLACEHOLDER_TOKEN`] filling gaps.
pub fn load_corpus(root: &Path, dataset: &DatasetId) -> Result<Corpus> {
    let dir = dataset_dir(root, dataset);
    let mut corpus = Corpus {
        dataset: dataset.clone(),
        train: Vec::new(),
        dev: Vec::new(),
        test: Vec::new(),
        documents: BTreeMap::new(),
    };
    let mut any = false;
    for split in Split::ALL {
        let path = dir.join(format!("{dataset}_{split}.rels"));
        if !path.is_file() {
            log::warn!("{dataset}: no {split} split at {}", path.display());
            continue;
        }
        any = true;
        *corpus.split_mut(split) = parse_rels_file(&path, dataset, split)?;

        for ext in ["tok", "conllu"] {
            let tok_path = dir.join(format!("{dataset}_{split}.{ext}"));
            if tok_path.is_file() {
                let text = fs::read_to_string(&tok_path).map_err(|e| Error::io(&tok_path, e))?;
                for (doc_id, tokens) in parse_token_source(&text) {
                    if tokens.is_empty() {
                        continue;
                    }
                    corpus.documents.entry(doc_id.clone()).or_insert(Document {
                        doc_id,
                        tokens,
                        dataset: dataset.clone(),
                    });
                }
                break;
            }
        }
    }
    if !any {
        return Err(Error::Corpus(format!(
            "no .rels files for {dataset} under {}",
            dir.display()
        )));
    }
    synthesize_missing_documents(&mut corpus);
    validate_documents(&corpus)?;
    log::info!("{dataset}: {:?}", corpus.counts());
    Ok(corpus)
}

fn unit_tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().filter(|t| *t != "<*>").collect()
}

fn synthesize_missing_documents(corpus: &mut Corpus) {
    let mut synthesized: BTreeMap<String, Vec<Option<String>>> = BTreeMap::new();
    for rel in corpus.train.iter().chain(&corpus.dev).chain(&corpus.test) {
        if corpus.documents.contains_key(&rel.doc_id) {
            continue;
        }
        let slots = synthesized.entry(rel.doc_id.clone()).or_default();
        for (spans, text) in [(&rel.unit1, &rel.unit1_text), (&rel.unit2, &rel.unit2_text)] {
            if slots.len() < spans.max() {
                slots.resize(spans.max(), None);
            }
            let words = unit_tokens(text);
            let aligned = words.len() == spans.len();
            for (k, idx) in spans.indices().enumerate() {
                let slot = &mut slots[idx - 1];
                if slot.is_none() && aligned {
                    *slot = Some(words[k].to_string());
                }
            }
        }
    }
    for (doc_id, slots) in synthesized {
        let tokens = slots
            .into_iter()
            .map(|t| t.unwrap_or_else(|| PLACEHOLDER_TOKEN.to_string()))
            .collect();
        corpus.documents.insert(
            doc_id.clone(),
            Document {
                doc_id,
                tokens,
                dataset: corpus.dataset.clone(),
            },
        );
    }
}

fn validate_documents(corpus: &Corpus) -> Result<()> {
    for rel in corpus.relations() {
        let doc = corpus.documents.get(&rel.doc_id).ok_or_else(|| {
            Error::Corpus(format!("{}: unknown document {}", rel.dataset, rel.doc_id))
        })?;
        let max = rel.unit1.max().max(rel.unit2.max());
        if max > doc.len() {
            return Err(Error::Corpus(format!(
                "{}: span index {max} beyond document {} of {} tokens",
                rel.dataset,
                rel.doc_id,
                doc.len()
            )));
        }
    }
    Ok(())
}

/// Finds every dataset id with at least one `<id>_<split>.rels` file below `root`.
pub fn discover_datasets(root: &Path) -> Result<Vec<DatasetId>> {
    let mut found = std::collections::BTreeSet::new();
    for entry in walkdir::WalkDir::new(root).follow_links(true) {
        let entry = entry.map_err(|e| {
            Error::io(
                root,
                e.into_io_error()
                    .unwrap_or_else(|| std::io::Error::other("walk error")),
            )
        })?;
        let name = entry.file_name().to_string_lossy();
        let Some(stem) = name.strip_suffix(".rels") else {
            continue;
        };
        let Some((id, split)) = stem.rsplit_once('_') else {
            continue;
        };
        if split.parse::<Split>().is_ok() {
            if let Ok(id) = id.parse::<DatasetId>() {
                found.insert(id);
            }
        }
    }
    if found.is_empty() {
        return Err(Error::Corpus(format!(
            "no datasets found under {}",
            root.display()
        )));
    }
    Ok(found.into_iter().collect())
}

/// Loads every dataset under `root`, in dataset-id order.
pub fn load_benchmark(root: &Path) -> Result<Vec<Corpus>> {
    let ids = discover_datasets(root)?;
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let dir = find_dataset_dir(root, &id).unwrap_or_else(|| root.to_path_buf());
        out.push(load_corpus(&dir, &id)?);
    }
    Ok(out)
}

fn find_dataset_dir(root: &Path, id: &DatasetId) -> Option<PathBuf> {
    let needle = format!("{id}_");
    walkdir::WalkDir::new(root)
        .follow_links(true)
        .into_iter()
        .filter_map(|e| e.ok())
        .find(|e| {
            let n = e.file_name().to_string_lossy();
            n.starts_with(&needle) && n.ends_with(".rels")
        })
        .and_then(|e| e.path().parent().map(Path::to_path_buf))
}

/// Normalized JSONL row for one relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationRecord {
    pub dataset: DatasetId,
    pub doc_id: String,
    pub unit1: TokenSpanSet,
    pub unit2: TokenSpanSet,
    pub dir: Direction,
    pub orig_label: String,
    pub label: Option<UnifiedLabel>,
    pub split: Split,
}

impl From<&RelationInstance> for RelationRecord {
    fn from(r: &RelationInstance) -> Self {
        RelationRecord {
            dataset: r.dataset.clone(),
            doc_id: r.doc_id.clone(),
            unit1: r.unit1.clone(),
            unit2: r.unit2.clone(),
            dir: r.direction,
            orig_label: r.original_label.clone(),
            label: r.unified_label,
            split: r.split,
        }
    }
}

impl RelationRecord {
    /// Unit texts are not part of the JSONL row and come back empty.
    pub fn into_instance(self) -> RelationInstance {
        RelationInstance {
            dataset: self.dataset,
            doc_id: self.doc_id,
            unit1: self.unit1,
            unit2: self.unit2,
            unit1_text: String::new(),
            unit2_text: String::new(),
            direction: self.dir,
            original_label: self.orig_label,
            unified_label: self.label,
            split: self.split,
        }
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
